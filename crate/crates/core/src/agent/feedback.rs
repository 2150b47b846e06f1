//! Natural-language feedback from an evaluation report, for plan refinement.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::assess::Mismatch;
use crate::eval::{EvaluationReport, Stage1Outcome};
use crate::metrics::ErrorMode;
use crate::task::{Target, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Quality,
    Speedup,
    Latency,
}

/// One target dimension: what was required and what was measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub dimension: Dimension,
    pub required: f64,
    /// `None` when the candidate never reached measurement.
    pub measured: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub candidate_id: String,
    /// Quality first, then the efficiency dimension if the task has one.
    pub gaps: Vec<Gap>,
    pub errors: BTreeSet<ErrorMode>,
    pub mismatches: Vec<Mismatch>,
    pub runtime_error: Option<String>,
}

impl FeedbackReport {
    pub fn from_report(report: &EvaluationReport, task: &TaskSpec) -> Self {
        let s3 = report.relative();
        let mut gaps = vec![Gap {
            dimension: Dimension::Quality,
            required: task.quality_threshold,
            measured: s3.map(|s| s.quality_loss),
            satisfied: s3.is_some_and(|s| s.quality_passed),
        }];
        match task.target() {
            Target::None => {}
            Target::Speedup { required } => gaps.push(Gap {
                dimension: Dimension::Speedup,
                required,
                measured: s3.map(|s| s.speedup),
                satisfied: s3.is_some_and(|s| s.efficiency_passed),
            }),
            Target::Latency { bound } => gaps.push(Gap {
                dimension: Dimension::Latency,
                required: bound,
                measured: s3.map(|s| s.latency),
                satisfied: s3.is_some_and(|s| s.efficiency_passed),
            }),
        }
        let (mismatches, runtime_error) = match &report.stage1 {
            Stage1Outcome::RuntimeFailure { message } => (Vec::new(), Some(message.clone())),
            Stage1Outcome::Assessed { verdict, .. } => (verdict.mismatches.clone(), None),
        };
        Self {
            candidate_id: report.candidate_id.clone(),
            gaps,
            errors: report.errors.clone(),
            mismatches,
            runtime_error,
        }
    }

    /// One line per fact; this is the text the planner sees.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for g in &self.gaps {
            let line = match (g.dimension, g.measured) {
                (d, None) => format!("{}: not measured", dim_name(d)),
                (Dimension::Quality, Some(m)) => format!(
                    "quality: measured loss {:.2}% vs limit {:.2}% -> {}",
                    100.0 * m,
                    100.0 * g.required,
                    if g.satisfied { "within limit".to_string() } else { format!("above limit by {:.2}%", 100.0 * (m - g.required)) }
                ),
                (Dimension::Speedup, Some(m)) => format!(
                    "speedup: measured {m:.3}x vs required {:.3}x -> {}",
                    g.required,
                    if g.satisfied { "met".to_string() } else { format!("short by {:.3}x", g.required - m) }
                ),
                (Dimension::Latency, Some(m)) => format!(
                    "latency: measured {m:.4} s vs bound {:.4} s -> {}",
                    g.required,
                    if g.satisfied { "met".to_string() } else { format!("over by {:.4} s", m - g.required) }
                ),
            };
            let _ = writeln!(s, "{line}");
        }
        for m in &self.mismatches {
            let _ = writeln!(
                s,
                "mismatch: {} expected {} found {}",
                m.attribute,
                m.expected,
                m.found.as_deref().unwrap_or("nothing")
            );
        }
        if let Some(e) = &self.runtime_error {
            let _ = writeln!(s, "runtime error: {e}");
        }
        if !self.errors.is_empty() {
            let names: Vec<&str> = self.errors.iter().map(|e| e.as_str()).collect();
            let _ = writeln!(s, "errors: {}", names.join(", "));
        }
        s
    }

    pub fn all_satisfied(&self) -> bool {
        self.gaps.iter().all(|g| g.satisfied)
    }
}

fn dim_name(d: Dimension) -> &'static str {
    match d {
        Dimension::Quality => "quality",
        Dimension::Speedup => "speedup",
        Dimension::Latency => "latency",
    }
}
