use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rules::{AttrPath, RuleSet};
use super::scan::scan;
use crate::task::{Conditioning, KeyAttributes, MethodParams, Resolution, Vocabulary};

/// Attributes recovered from a source. Absent fields were not found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialAttributes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_inference_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<Conditioning>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub preprocessors: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub accel_methods: BTreeMap<String, MethodParams>,
}

impl PartialAttributes {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn resolution(&self) -> Option<Resolution> {
        Some(Resolution::new(self.width?, self.height?))
    }

    /// Every field of `attrs`, as if fully extracted.
    pub fn from_full(attrs: &KeyAttributes) -> Self {
        Self {
            pipeline_class: Some(attrs.pipeline_class.clone()),
            model_id: Some(attrs.model_id.clone()),
            scheduler_class: Some(attrs.scheduler_class.clone()),
            num_inference_steps: Some(attrs.num_inference_steps),
            width: Some(attrs.resolution.width),
            height: Some(attrs.resolution.height),
            conditioning: Some(attrs.conditioning),
            preprocessors: attrs.preprocessors.clone(),
            accel_methods: attrs.accel_methods.clone(),
        }
    }

    /// Fills absent fields from `defaults`. Acceleration methods and
    /// preprocessors are never filled in: absent means not applied.
    pub fn complete_with(&self, defaults: &KeyAttributes) -> KeyAttributes {
        KeyAttributes {
            pipeline_class: self.pipeline_class.clone().unwrap_or_else(|| defaults.pipeline_class.clone()),
            model_id: self.model_id.clone().unwrap_or_else(|| defaults.model_id.clone()),
            scheduler_class: self.scheduler_class.clone().unwrap_or_else(|| defaults.scheduler_class.clone()),
            num_inference_steps: self.num_inference_steps.unwrap_or(defaults.num_inference_steps),
            resolution: Resolution::new(
                self.width.unwrap_or(defaults.resolution.width),
                self.height.unwrap_or(defaults.resolution.height),
            ),
            conditioning: self.conditioning.unwrap_or(defaults.conditioning),
            preprocessors: self.preprocessors.clone(),
            accel_methods: self.accel_methods.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Two captures disagreed; `chosen` is the value kept.
    Conflict {
        attribute: String,
        values: Vec<String>,
        chosen: String,
    },
    /// A capture was dropped by its normalizer.
    Rejected { attribute: String, reason: String },
    /// Captured identifier is outside the closed vocabulary.
    OutOfVocabulary { attribute: String, value: String },
    /// The source could not be scanned at all.
    Unscannable { reason: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Conflict { attribute, values, chosen } => {
                write!(f, "{attribute}: conflicting captures {values:?}, kept '{chosen}'")
            }
            Diagnostic::Rejected { attribute, reason } => write!(f, "{attribute}: {reason}"),
            Diagnostic::OutOfVocabulary { attribute, value } => {
                write!(f, "{attribute}: '{value}' is not a known identifier")
            }
            Diagnostic::Unscannable { reason } => write!(f, "source not scannable: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("ambiguous `{attribute}`: {values:?} captured at byte {offset} with equal priority")]
pub struct AmbiguityError {
    pub attribute: String,
    pub values: Vec<String>,
    pub offset: usize,
}

#[derive(Debug, Clone)]
struct Capture {
    value: String,
    offset: usize,
    priority: u32,
}

/// Resolves competing captures of one scalar attribute: the latest source
/// position wins; at equal position the lower priority number wins.
fn resolve(attribute: &AttrPath, mut caps: Vec<Capture>) -> Result<(String, Option<Diagnostic>), AmbiguityError> {
    caps.sort_by(|a, b| a.offset.cmp(&b.offset).then(b.priority.cmp(&a.priority)));
    let winner = caps.last().expect("non-empty").clone();
    let rivals: Vec<&Capture> = caps
        .iter()
        .filter(|c| c.offset == winner.offset && c.priority == winner.priority && c.value != winner.value)
        .collect();
    if !rivals.is_empty() {
        let mut values: Vec<String> = rivals.iter().map(|c| c.value.clone()).collect();
        values.push(winner.value.clone());
        values.sort();
        return Err(AmbiguityError {
            attribute: attribute.name(),
            values,
            offset: winner.offset,
        });
    }
    // Ties inside one statement are settled by priority and are not reported.
    let overridden = caps.iter().any(|c| c.offset != winner.offset && c.value != winner.value);
    let diag = overridden.then(|| Diagnostic::Conflict {
        attribute: attribute.name(),
        values: caps.iter().map(|c| c.value.clone()).collect(),
        chosen: winner.value.clone(),
    });
    Ok((winner.value, diag))
}

/// Extracts key attributes from candidate source with the built-in rules.
pub fn extract_attributes(source: &str) -> Result<(PartialAttributes, Vec<Diagnostic>), AmbiguityError> {
    extract_with(source, RuleSet::builtin(), Vocabulary::builtin())
}

pub fn extract_with(
    source: &str,
    rules: &RuleSet,
    vocab: &Vocabulary,
) -> Result<(PartialAttributes, Vec<Diagnostic>), AmbiguityError> {
    let mut diags = Vec::new();
    let model = match scan(source) {
        Ok(m) => m,
        Err(e) => {
            diags.push(Diagnostic::Unscannable { reason: e.to_string() });
            return Ok((PartialAttributes::default(), diags));
        }
    };

    let mut scalars: BTreeMap<AttrPath, Vec<Capture>> = BTreeMap::new();
    let mut sets: BTreeMap<AttrPath, BTreeSet<String>> = BTreeMap::new();
    for rule in &rules.rules {
        for pattern in &rule.patterns {
            for raw in pattern.captures(&model) {
                let value = match rule.normalizer.apply(&raw.raw) {
                    Ok(v) => v,
                    Err(reason) => {
                        diags.push(Diagnostic::Rejected {
                            attribute: rule.attribute.name(),
                            reason,
                        });
                        continue;
                    }
                };
                if let Some(category) = &rule.vocabulary {
                    if !vocab.contains(category, &value) {
                        diags.push(Diagnostic::OutOfVocabulary {
                            attribute: rule.attribute.name(),
                            value: value.clone(),
                        });
                    }
                }
                if rule.attribute.is_set() {
                    sets.entry(rule.attribute.clone()).or_default().insert(value);
                } else {
                    scalars.entry(rule.attribute.clone()).or_default().push(Capture {
                        value,
                        offset: raw.offset,
                        priority: pattern.priority,
                    });
                }
            }
        }
    }

    let mut out = PartialAttributes::default();
    for (path, values) in sets {
        match path {
            AttrPath::Preprocessors => out.preprocessors = values,
            AttrPath::Method(m) => {
                out.accel_methods.entry(m).or_default();
            }
            _ => unreachable!("only set-valued paths are accumulated"),
        }
    }
    for (path, caps) in scalars {
        let (value, diag) = resolve(&path, caps)?;
        diags.extend(diag);
        let reject = |reason: &str| Diagnostic::Rejected {
            attribute: path.name(),
            reason: reason.to_string(),
        };
        match &path {
            AttrPath::PipelineClass => out.pipeline_class = Some(value),
            AttrPath::ModelId => out.model_id = Some(value),
            AttrPath::SchedulerClass => out.scheduler_class = Some(value),
            AttrPath::NumInferenceSteps | AttrPath::Width | AttrPath::Height => match value.parse::<u32>() {
                Ok(v) => match path {
                    AttrPath::NumInferenceSteps => out.num_inference_steps = Some(v),
                    AttrPath::Width => out.width = Some(v),
                    _ => out.height = Some(v),
                },
                Err(_) => diags.push(reject("expected an integer")),
            },
            AttrPath::Conditioning => match Conditioning::parse(&value) {
                Some(c) => out.conditioning = Some(c),
                None => diags.push(reject("unknown conditioning")),
            },
            AttrPath::MethodParam(m, p) => match value.parse::<f64>() {
                Ok(v) => {
                    out.accel_methods.entry(m.clone()).or_default().insert(p.clone(), v);
                }
                Err(_) => diags.push(reject("expected a number")),
            },
            AttrPath::Preprocessors | AttrPath::Method(_) => unreachable!("set-valued"),
        }
    }
    Ok((out, diags))
}
