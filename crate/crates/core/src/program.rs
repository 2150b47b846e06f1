use serde::{Deserialize, Serialize};

use crate::agent::PlanGenome;

/// Generated source text plus the plan it realises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanGenome>,
}

impl CandidateProgram {
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            plan: None,
        }
    }

    pub fn with_plan(mut self, plan: PlanGenome) -> Self {
        self.plan = Some(plan);
        self
    }
}
