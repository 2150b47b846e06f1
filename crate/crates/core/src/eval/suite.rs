use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::evaluator::{EvalError, Evaluator};
use super::report::EvaluationReport;
use crate::metrics::{mean, ErrorMode};
use crate::program::CandidateProgram;
use crate::task::TaskSpec;

/// Histogram bucket for tasks that had no candidate at all.
pub const MISSING_BUCKET: &str = "Missing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub tasks: usize,
    pub passed: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    /// Levels 1 to 5, always present.
    pub per_level: BTreeMap<u8, LevelSummary>,
    /// Task-weighted pass rate over the whole suite.
    pub overall_pass_rate: f64,
    /// Achievement rate per hard task; 0 when stage 3 was not reached.
    pub hard_achievement: BTreeMap<String, f64>,
    pub mean_hard_achievement: Option<f64>,
    /// Failure count per error mode, plus the missing-candidate bucket.
    /// Modes can co-occur, so counts may sum past the failure total.
    pub error_histogram: BTreeMap<String, usize>,
    pub tasks: usize,
}

/// Builds the summary from per-task reports; tasks without a report count
/// as failed and missing.
pub fn summarize(tasks: &[TaskSpec], reports: &BTreeMap<String, EvaluationReport>) -> SuiteSummary {
    let mut per_level: BTreeMap<u8, LevelSummary> = (1..=5)
        .map(|l| (l, LevelSummary { tasks: 0, passed: 0, pass_rate: 0.0 }))
        .collect();
    let mut histogram: BTreeMap<String, usize> = ErrorMode::ALL.iter().map(|m| (m.to_string(), 0)).collect();
    histogram.insert(MISSING_BUCKET.into(), 0);
    let mut hard = BTreeMap::new();
    let mut passed_total = 0;
    for t in tasks {
        let entry = per_level.entry(t.level).or_insert(LevelSummary { tasks: 0, passed: 0, pass_rate: 0.0 });
        entry.tasks += 1;
        let report = reports.get(&t.task_id);
        match report {
            Some(r) if r.passed => {
                entry.passed += 1;
                passed_total += 1;
            }
            Some(r) => {
                for e in &r.errors {
                    *histogram.entry(e.to_string()).or_default() += 1;
                }
            }
            None => *histogram.entry(MISSING_BUCKET.into()).or_default() += 1,
        }
        if t.is_hard() {
            let sa = report.and_then(|r| r.relative()).map_or(0.0, |s| s.achievement_rate);
            hard.insert(t.task_id.clone(), sa);
        }
    }
    for s in per_level.values_mut() {
        s.pass_rate = if s.tasks == 0 { 0.0 } else { s.passed as f64 / s.tasks as f64 };
    }
    let hard_values: Vec<f64> = hard.values().copied().collect();
    SuiteSummary {
        per_level,
        overall_pass_rate: if tasks.is_empty() { 0.0 } else { passed_total as f64 / tasks.len() as f64 },
        mean_hard_achievement: (!hard_values.is_empty()).then(|| mean(&hard_values)),
        hard_achievement: hard,
        error_histogram: histogram,
        tasks: tasks.len(),
    }
}

/// Evaluates at most one candidate per task and aggregates.
pub fn score_suite(
    tasks: &[TaskSpec],
    candidates: &BTreeMap<String, CandidateProgram>,
    evaluator: &Evaluator,
) -> Result<(SuiteSummary, BTreeMap<String, EvaluationReport>), EvalError> {
    let mut reports = BTreeMap::new();
    for t in tasks {
        if let Some(c) = candidates.get(&t.task_id) {
            reports.insert(t.task_id.clone(), evaluator.evaluate(c, t)?);
        }
    }
    Ok((summarize(tasks, &reports), reports))
}

impl SuiteSummary {
    /// Table with one column per level and a task-weighted average.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str("            L1      L2      L3      L4      L5      Avg.\n");
        s.push_str("tasks  ");
        for l in 1..=5u8 {
            s.push_str(&format!("{:>8}", self.per_level.get(&l).map_or(0, |x| x.tasks)));
        }
        s.push_str(&format!("{:>8}\n", self.tasks));
        s.push_str("S_p %  ");
        for l in 1..=5u8 {
            s.push_str(&format!("{:>8.2}", 100.0 * self.per_level.get(&l).map_or(0.0, |x| x.pass_rate)));
        }
        s.push_str(&format!("{:>8.2}\n", 100.0 * self.overall_pass_rate));
        if let Some(sa) = self.mean_hard_achievement {
            s.push_str(&format!("\nhard-task S_a (mean over {}): {:.4}\n", self.hard_achievement.len(), sa));
        }
        s.push_str("\nerror histogram:\n");
        for (k, v) in &self.error_histogram {
            s.push_str(&format!("  {k:<22}{v}\n"));
        }
        s
    }
}
