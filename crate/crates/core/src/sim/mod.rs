//! Execution backends: a deterministic simulated landscape of diffusion
//! pipelines and acceleration effects, and a subprocess backend driving the
//! external measurement harness.

mod backend;
mod landscape;
mod space;

pub use backend::{
    bundled_prompts, prompt_at, BackendError, Capabilities, ExecutionBackend, MetricsRecord, RecordStatus, RunOutput,
    RunStatus, SimBackend, SubprocessBackend,
};
pub use landscape::{
    feature_reuse_effect, gated_activation_effect, half_precision_effect, step_quality_delta, token_merging_effect,
    CurveConstants, Effect, LandscapeError, Noise, PipelineProfile, SimLandscape,
};
pub use space::{best_feasible, max_feasible_speedup, point_metrics, Choice, Coord, Feasible, GridPoint, SearchSpace, LOSS_EPS};
