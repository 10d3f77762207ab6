//! Structured run report and deterministic CSV emission.
//!
//! Every reported constant carries the tag of its defining relation
//! (e.g. "3.2", "B.1", "2.1(4)"); suites record pass/fail/skip outcomes
//! and hard-invariant failures drive the process exit status.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggedConstant {
    /// defining-equation tag
    pub tag: String,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub status: SuiteStatus,
    pub detail: serde_json::Value,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skip_reason: Option<String>,
}

impl SuiteOutcome {
    pub fn pass(detail: serde_json::Value) -> Self {
        SuiteOutcome { status: SuiteStatus::Pass, detail, failures: Vec::new(), skip_reason: None }
    }

    pub fn fail(detail: serde_json::Value, failures: Vec<String>) -> Self {
        SuiteOutcome { status: SuiteStatus::Fail, detail, failures, skip_reason: None }
    }

    pub fn skipped(reason: impl Into<String>) -> Self {
        SuiteOutcome {
            status: SuiteStatus::Skipped,
            detail: serde_json::Value::Null,
            failures: Vec::new(),
            skip_reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub constants: Vec<TaggedConstant>,
    pub suites: BTreeMap<String, SuiteOutcome>,
    pub hard_failures: Vec<String>,
}

impl Report {
    pub fn new(config: serde_json::Value) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            config,
            constants: Vec::new(),
            suites: BTreeMap::new(),
            hard_failures: Vec::new(),
        }
    }

    pub fn constant(&mut self, tag: &str, name: &str, value: f64) {
        self.constants.push(TaggedConstant { tag: tag.into(), name: name.into(), value });
    }

    pub fn add_suite(&mut self, name: &str, outcome: SuiteOutcome) {
        if outcome.status == SuiteStatus::Fail {
            for f in &outcome.failures {
                self.hard_failures.push(format!("{name}: {f}"));
            }
        }
        self.suites.insert(name.to_string(), outcome);
    }

    pub fn ok(&self) -> bool {
        self.hard_failures.is_empty()
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("report.json");
        let mut file = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(path)
    }
}

/// Shortest-round-trip float formatting; deterministic for a fixed binary.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes a CSV with a header row; every cell is pre-rendered.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
