//! Three-stage evaluation: static assessment, absolute quality, and
//! relative performance against a reconstructed baseline.

mod evaluator;
mod report;
mod suite;

pub use evaluator::{baseline_source, EvalConfig, EvalError, Evaluator, TARGET_RTOL};
pub use report::{EvaluationReport, Slot, Stage1Outcome, Stage2Outcome, Stage3Outcome};
pub use suite::{score_suite, summarize, LevelSummary, SuiteSummary, MISSING_BUCKET};
