//! Machine-readable result types shared by the library and the CLI.

use serde::{Deserialize, Serialize};

use crate::estimator::IterationRecord;

/// Closed interval `[lo, hi]` bracketing a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Inputs that parameterised a run; everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// One scoring result. Exactly one of `score` / `interval` is populated:
/// point methods fill `score`, the bracketing method fills `interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreReport {
    /// Tool name and version that produced the report.
    pub tool: String,
    /// SHA-256 over the canonical scenario file contents.
    pub scenario_digest: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<Interval>,
    #[serde(default)]
    pub params: ReportParams,
    /// Per-crash-count trace, present for the iterative method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_trace: Option<Vec<IterationRecord>>,
    /// Wall-clock time spent inside the scoring call.
    pub duration_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}
