//! Generation, evaluation and evolutionary refinement of diffusion-model
//! acceleration code.

pub mod agent;
pub mod assess;
pub mod builder;
pub mod eval;
pub mod ga;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod orchestrator;
pub mod program;
pub mod render;
pub mod sim;
pub mod task;

pub use program::CandidateProgram;
