//! Planning, coding and debugging agents, plus the simulated developer
//! that stands in for a model in tests and offline runs.

mod developer;
mod feedback;
mod genome;
mod kb;
mod prompts;
mod request;
mod roles;

pub use developer::{DeveloperProfile, SimulatedDeveloper};
pub use feedback::{Dimension, FeedbackReport, Gap};
pub use genome::{Lineage, Origin, PlanGenome};
pub use kb::{CodeTemplate, Insight, KnowledgeBase};
pub use prompts::{config_toml, extract_code, fill, parse_plan, section, section_attr, wrap, ParsedPlan, PromptTemplates};
pub use request::{describe_request, parse_request, requested_accel, ParsedRequest};
pub use roles::{plan_body, AgentError, Agents, EpisodeBudget, EpisodeOutcome, PlanMode};
