//! Retrieval knowledge base: code templates and per-method insights.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

const BUILTIN: &str = include_str!("../../data/knowledge_base.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeTemplate {
    pub id: String,
    pub pipelines: BTreeSet<String>,
    #[serde(default)]
    pub methods: BTreeSet<String>,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Insight {
    pub method: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct KnowledgeBase {
    #[serde(default = "enabled_default", skip)]
    enabled: bool,
    #[serde(default, rename = "template")]
    pub templates: Vec<CodeTemplate>,
    #[serde(default, rename = "insight")]
    pub insights: Vec<Insight>,
}

fn enabled_default() -> bool {
    true
}

impl KnowledgeBase {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("bundled knowledge base is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        let mut kb: Self = toml::from_str(text)?;
        kb.enabled = true;
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// A knowledge base that returns nothing, for ablations.
    pub fn disabled() -> Self {
        Self { enabled: false, templates: Vec::new(), insights: Vec::new() }
    }

    pub fn set_enabled(mut self, on: bool) -> Self {
        self.enabled = on;
        self
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Exact `(pipeline, methods)` match first, then the same-pipeline
    /// template covering the most requested methods. Ties go to file order.
    pub fn lookup(&self, pipeline: &str, methods: &BTreeSet<String>) -> Option<&CodeTemplate> {
        if !self.enabled {
            return None;
        }
        let candidates = self.templates.iter().filter(|t| t.pipelines.contains(pipeline));
        let mut best: Option<&CodeTemplate> = None;
        for t in candidates {
            if &t.methods == methods {
                return Some(t);
            }
            if t.methods.is_subset(methods) && best.is_none_or(|b| t.methods.len() > b.methods.len()) {
                best = Some(t);
            }
        }
        best
    }

    /// Insights for the given methods, or for every method when `methods`
    /// is empty (the planner has not chosen yet).
    pub fn insights_for(&self, methods: &BTreeSet<String>) -> Vec<&Insight> {
        if !self.enabled {
            return Vec::new();
        }
        self.insights
            .iter()
            .filter(|i| methods.is_empty() || methods.contains(&i.method))
            .collect()
    }
}
