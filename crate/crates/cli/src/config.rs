//! Run configuration: a JSON document mirroring the CLI flags. Identical
//! config + seed must reproduce byte-identical outputs.

use serde::{Deserialize, Serialize};

use czkit_core::accretive::{GeneratorKind, SystemConfig};
use czkit_core::operator::KernelSpec;
use czkit_core::space::SpaceSpec;

pub const MAX_POINTS: usize = 4096;
pub const MAX_DEPTH: u32 = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingSettings {
    pub delta_stop: f64,
    /// c_stop = c_stop_factor x measured size constant
    pub c_stop_factor: f64,
    #[serde(default)]
    pub maximal_variant: bool,
}

impl Default for StoppingSettings {
    fn default() -> Self {
        StoppingSettings { delta_stop: 0.125, c_stop_factor: 64.0, maximal_variant: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcrSettings {
    /// number of random probe pairs
    pub probes: usize,
    /// points in the compression sweep
    pub tau_points: usize,
    /// owner-depth bound for configuration sweeps
    pub depth: u32,
}

impl Default for BcrSettings {
    fn default() -> Self {
        BcrSettings { probes: 3, tau_points: 10, depth: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySettings {
    pub geodesic_bound: f64,
    pub grid_points: usize,
}

impl Default for GeometrySettings {
    fn default() -> Self {
        GeometrySettings { geodesic_bound: 1.5, grid_points: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub space: SpaceSpec,
    pub delta: f64,
    pub max_depth: u32,
    pub kernel: KernelSpec,
    pub system: SystemConfig,
    #[serde(default)]
    pub stopping: StoppingSettings,
    #[serde(default)]
    pub bcr: BcrSettings,
    #[serde(default)]
    pub geometry: GeometrySettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            space: SpaceSpec::UniformLine { n: 64, h: 1.0 },
            delta: 0.5,
            max_depth: MAX_DEPTH,
            kernel: KernelSpec::Cauchy1d,
            system: SystemConfig::constant_one(2.0, 2.0),
            stopping: StoppingSettings::default(),
            bcr: BcrSettings::default(),
            geometry: GeometrySettings::default(),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            anyhow::bail!("delta must lie in (0, 1), got {}", self.delta);
        }
        if self.max_depth > 32 {
            anyhow::bail!("max_depth {} too deep for a dense toolkit", self.max_depth);
        }
        if !(self.system.p > 1.0 && self.system.q > 1.0) {
            anyhow::bail!("exponents must exceed 1");
        }
        Ok(())
    }

    /// Applies flag-level overrides onto a loaded config.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_overrides(
        &mut self,
        n: Option<usize>,
        delta: Option<f64>,
        kernel: Option<&str>,
        p: Option<f64>,
        q: Option<f64>,
        amplitude: Option<f64>,
        seed: Option<u64>,
    ) -> anyhow::Result<()> {
        if let Some(n) = n {
            match &mut self.space {
                SpaceSpec::UniformLine { n: slot, .. } => *slot = n,
                SpaceSpec::Circle { n: slot, .. } => *slot = n,
                other => anyhow::bail!("--n does not apply to {other:?}"),
            }
        }
        if let Some(d) = delta {
            self.delta = d;
        }
        if let Some(k) = kernel {
            self.kernel = match k {
                "cauchy-1d" => KernelSpec::Cauchy1d,
                "hardy-size" => KernelSpec::HardySize,
                "riesz-like-2d" => KernelSpec::RieszLike2d,
                other => anyhow::bail!("unknown kernel {other}"),
            };
        }
        if let Some(p) = p {
            self.system.p = p;
        }
        if let Some(q) = q {
            self.system.q = q;
        }
        if let Some(a) = amplitude {
            self.system.generator = if a == 0.0 {
                GeneratorKind::ConstantOne
            } else {
                GeneratorKind::Oscillatory { amplitude: a }
            };
        }
        if let Some(s) = seed {
            self.seed = s;
            self.system.seed = s;
        }
        Ok(())
    }
}
