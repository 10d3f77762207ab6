//! Batch driver binding the toolkit's modules: space generation, cube
//! trees, operator assembly, wavelet systems, hypothesis verification,
//! stopping decompositions, pairing expansions with compression sweeps,
//! and geometry studies. Runs are fully deterministic: identical config
//! and seed reproduce byte-identical outputs.

mod config;
mod pipeline;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use pipeline::Context;
use report::Report;

#[derive(Parser)]
#[command(name = "czkit", version, about = "dyadic-wavelet singular integral toolkit")]
struct Cli {
    /// JSON config file; flags below override individual fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory (default: ./czkit-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// kernel kind: cauchy-1d | hardy-size | riesz-like-2d
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    q: Option<f64>,
    /// oscillation amplitude of the generated system (0 = constant one)
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    /// number of points in the compression sweep
    #[arg(long = "tau-sweep", global = true)]
    tau_sweep: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// generate the configured space and export it
    BuildSpace,
    /// build the cube hierarchy and export the golden tree file
    BuildTree,
    /// assemble the dense operator and run the kernel diagnostics
    Assemble,
    /// build and verify the adapted wavelet systems
    Wavelets,
    /// run the accretive-system hypothesis verifiers
    VerifyAccretive,
    /// run the stopping decompositions and their identity suites
    Stopping,
    /// expand projected pairings and verify the four-term identity
    Bcr,
    /// threshold sweep of the decay-compressed evaluation
    CompressSweep,
    /// geometric decay / geodesic / Hardy studies
    Geometry,
    /// everything, in dependency order
    All {
        /// restrict to the named suites (repeatable)
        #[arg(long)]
        suite: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut config: RunConfig = match &cli.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(
        cli.n,
        cli.delta,
        cli.kernel.as_deref(),
        cli.p,
        cli.q,
        cli.amplitude,
        cli.seed,
    )?;
    if let Some(points) = cli.tau_sweep {
        config.bcr.tau_points = points;
    }
    config.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("czkit-out"));

    let selected: Vec<&str> = match &cli.command {
        Command::BuildSpace => vec!["space"],
        Command::BuildTree => vec!["space", "tree"],
        Command::Assemble => vec!["space", "tree", "operator"],
        Command::Wavelets => vec!["space", "tree", "wavelets"],
        Command::VerifyAccretive => vec!["space", "tree", "operator", "accretive"],
        Command::Stopping => vec!["space", "tree", "operator", "stopping"],
        Command::Bcr => vec!["space", "tree", "operator", "bcr"],
        Command::CompressSweep => vec!["space", "tree", "operator", "compress"],
        Command::Geometry => vec!["space", "geometry"],
        Command::All { suite } => {
            if suite.is_empty() {
                suites::SUITE_NAMES.to_vec()
            } else {
                let mut picked = Vec::new();
                for name in suites::SUITE_NAMES {
                    if suite.iter().any(|s| s == name) {
                        picked.push(name);
                    }
                }
                if picked.len() != suite.len() {
                    anyhow::bail!("unknown suite among {suite:?}; valid: {:?}", suites::SUITE_NAMES);
                }
                picked
            }
        }
    };

    let mut report = Report::new(serde_json::to_value(&config)?);
    let ctx = Context::build(config)?;
    for name in selected {
        let outcome = suites::run_suite(name, &ctx, &mut report, &out)?;
        let line = match &outcome.status {
            report::SuiteStatus::Pass => format!("suite {name}: pass"),
            report::SuiteStatus::Fail => {
                format!("suite {name}: FAIL ({})", outcome.failures.join("; "))
            }
            report::SuiteStatus::Skipped => format!(
                "suite {name}: skipped ({})",
                outcome.skip_reason.clone().unwrap_or_default()
            ),
        };
        println!("{line}");
        report.add_suite(name, outcome);
    }
    let ok = report.ok();
    let path = report.write(&out)?;
    println!("report: {}", path.display());
    Ok(ok)
}
