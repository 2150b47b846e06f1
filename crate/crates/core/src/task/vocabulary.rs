//! Closed identifier vocabularies for pipelines, models, schedulers,
//! preprocessors and acceleration methods.
//!
//! The built-in vocabulary ships as `data/vocabulary.toml`. A custom file with
//! the same layout can be loaded with [`Vocabulary::from_toml_str`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::Deserialize;

const BUILTIN: &str = include_str!("../../data/vocabulary.toml");

/// Value domain of an acceleration-method parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Real number in `[0, 1)`.
    Fraction,
    /// Integer `>= 1`.
    Count,
}

impl ParamKind {
    /// Returns a description of the violated rule, if any.
    pub fn check(self, value: f64) -> Option<&'static str> {
        match self {
            ParamKind::Fraction => {
                if value.is_finite() && (0.0..1.0).contains(&value) {
                    None
                } else {
                    Some("must be a fraction in [0, 1)")
                }
            }
            ParamKind::Count => {
                if value.is_finite() && value.fract() == 0.0 && value >= 1.0 {
                    None
                } else {
                    Some("must be an integer >= 1")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MethodSpec {
    #[serde(default)]
    pub params: Vec<ParamSpec>,
}

impl MethodSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub version: u32,
    pub pipelines: BTreeSet<String>,
    pub models: BTreeSet<String>,
    pub schedulers: BTreeSet<String>,
    pub preprocessors: BTreeSet<String>,
    pub methods: BTreeMap<String, MethodSpec>,
}

impl Vocabulary {
    /// The vocabulary bundled with the crate.
    pub fn builtin() -> &'static Vocabulary {
        static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| Self::from_toml_str(BUILTIN).expect("bundled vocabulary is valid"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn method(&self, name: &str) -> Option<&MethodSpec> {
        self.methods.get(name)
    }

    /// Looks up `name` in the named identifier category.
    pub fn contains(&self, category: &str, name: &str) -> bool {
        match category {
            "pipelines" => self.pipelines.contains(name),
            "models" => self.models.contains(name),
            "schedulers" => self.schedulers.contains(name),
            "preprocessors" => self.preprocessors.contains(name),
            "methods" => self.methods.contains_key(name),
            _ => false,
        }
    }
}
