//! Run manifests, acceptance checks and run records.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Version of the `summary.json` and `verify.json` layouts.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub overrides: Vec<(String, String)>,
    pub config_file: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Manifest {
    pub fn new(name: &str, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self { name: name.to_string(), seed, overrides: Vec::new(), config_file: None, out_dir: out_dir.into() }
    }

    pub fn with_set(mut self, key: &str, value: &str) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    /// Boolean property; `value` is 1 when it holds.
    #[serde(rename = "holds")]
    Holds,
}

/// One pass/fail comparison of a metric against a pinned threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub value: f64,
    pub op: Op,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(id: &str, value: f64, threshold: f64) -> Self {
        Self { id: id.to_string(), value, op: Op::AtMost, threshold, pass: value <= threshold }
    }

    pub fn at_least(id: &str, value: f64, threshold: f64) -> Self {
        Self { id: id.to_string(), value, op: Op::AtLeast, threshold, pass: value >= threshold }
    }

    pub fn holds(id: &str, ok: bool) -> Self {
        Self { id: id.to_string(), value: ok as u8 as f64, op: Op::Holds, threshold: 1.0, pass: ok }
    }

    pub fn describe(&self) -> String {
        match self.op {
            Op::AtMost => format!("{:.4e} <= {:.1e}", self.value, self.threshold),
            Op::AtLeast => format!("{:.4e} >= {:.1e}", self.value, self.threshold),
            Op::Holds => (if self.pass { "holds" } else { "does not hold" }).to_string(),
        }
    }
}

pub type Metrics = BTreeMap<String, f64>;

/// What an experiment reports. Metrics are recomputed from the emitted files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub metrics: Metrics,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The deterministic part of a run: everything except timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: String,
    pub figures: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<String>,
    pub metrics: Metrics,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub manifest: Manifest,
    pub summary: Summary,
    pub wall_time_s: f64,
}
