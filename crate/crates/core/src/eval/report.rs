use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assess::{Diagnostic, MatchVerdict};
use crate::metrics::ErrorMode;
use crate::task::Target;

/// State of a stage that may not have run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "outcome", rename_all = "snake_case")]
pub enum Slot<T> {
    Completed(T),
    /// The task has no quantitative target (stage 3 on levels 1-3).
    NotRequired,
    /// An earlier stage failed.
    SkippedDueToFailure,
}

impl<T> Slot<T> {
    pub fn completed(&self) -> Option<&T> {
        match self {
            Slot::Completed(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Stage1Outcome {
    /// The candidate did not run.
    RuntimeFailure { message: String },
    Assessed {
        verdict: MatchVerdict,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        diagnostics: Vec<Diagnostic>,
    },
}

impl Stage1Outcome {
    pub fn passed(&self) -> bool {
        matches!(self, Stage1Outcome::Assessed { verdict, .. } if verdict.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Outcome {
    pub mean_quality: f64,
    /// Absolute floor; `None` means any positive score passes.
    pub threshold: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage3Outcome {
    pub quality_loss: f64,
    pub speedup: f64,
    /// Mean candidate latency in seconds.
    pub latency: f64,
    pub baseline_latency: f64,
    pub quality_threshold: f64,
    pub target: Target,
    pub quality_passed: bool,
    pub efficiency_passed: bool,
    pub passed: bool,
    pub achievement_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task_id: String,
    pub candidate_id: String,
    pub stage1: Stage1Outcome,
    pub stage2: Slot<Stage2Outcome>,
    pub stage3: Slot<Stage3Outcome>,
    pub errors: BTreeSet<ErrorMode>,
    pub passed: bool,
    /// Median per-sample latency of the candidate run, seconds.
    pub wall_clock: f64,
}

impl EvaluationReport {
    /// L and the efficiency measure, when stage 3 ran.
    pub fn relative(&self) -> Option<&Stage3Outcome> {
        self.stage3.completed()
    }

    /// Index of the last stage that executed (1..=3).
    pub fn stages_reached(&self) -> u8 {
        if self.stage3.completed().is_some() {
            3
        } else if self.stage2.completed().is_some() {
            2
        } else {
            1
        }
    }
}
