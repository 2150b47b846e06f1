use serde::{Deserialize, Serialize};

use crate::assess::PartialAttributes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Fresh,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub generation: u32,
    /// Candidate the plan was refined from; `None` for fresh plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

/// A generation plan: prose plus the configuration it commits to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGenome {
    pub plan_text: String,
    pub encoded_config: PartialAttributes,
    /// The unaccelerated reference plan, in optimization mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PartialAttributes>,
    pub lineage: Lineage,
    pub origin: Origin,
}

impl PlanGenome {
    /// Refined plans carry a parent and fresh plans never do.
    pub fn lineage_is_consistent(&self) -> bool {
        match self.origin {
            Origin::Fresh => self.lineage.parent.is_none(),
            Origin::Refined => self.lineage.parent.is_some(),
        }
    }
}
