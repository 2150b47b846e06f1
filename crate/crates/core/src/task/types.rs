use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::vocabulary::Vocabulary;

pub const TOKEN_MERGING: &str = "token_merging";
pub const FEATURE_REUSE: &str = "feature_reuse";
pub const GATED_ACTIVATION: &str = "gated_activation";
pub const HALF_PRECISION: &str = "half_precision";

pub const MERGE_RATIO: &str = "merge_ratio";
pub const CACHE_INTERVAL: &str = "cache_interval";
pub const GATE_STEP: &str = "gate_step";

/// Default relative quality-loss bound.
pub const DEFAULT_QUALITY_THRESHOLD: f64 = 0.05;

pub const MIN_SIDE: u32 = 256;
pub const MAX_SIDE: u32 = 1024;

/// Parameters of one acceleration method, keyed by parameter name.
pub type MethodParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl From<(u32, u32)> for Resolution {
    fn from((width, height): (u32, u32)) -> Self {
        Self { width, height }
    }
}

impl From<Resolution> for (u32, u32) {
    fn from(r: Resolution) -> Self {
        (r.width, r.height)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    Text2img,
    Class2img,
    Img2img,
}

impl Conditioning {
    pub const ALL: [Conditioning; 3] = [Self::Text2img, Self::Class2img, Self::Img2img];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text2img => "text2img",
            Self::Class2img => "class2img",
            Self::Img2img => "img2img",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Medium => "medium",
            Self::Hard => "hard",
        }
    }
}

/// The statically checkable configuration of a diffusion program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyAttributes {
    pub pipeline_class: String,
    pub model_id: String,
    pub scheduler_class: String,
    pub num_inference_steps: u32,
    pub resolution: Resolution,
    pub conditioning: Conditioning,
    #[serde(default)]
    pub preprocessors: BTreeSet<String>,
    #[serde(default)]
    pub accel_methods: BTreeMap<String, MethodParams>,
}

impl KeyAttributes {
    /// Same program with every acceleration method removed.
    pub fn without_acceleration(&self) -> Self {
        Self {
            accel_methods: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn accel_config(&self) -> AccelConfig {
        AccelConfig::from_methods(&self.accel_methods)
    }

    pub fn with_accel(&self, accel: &AccelConfig) -> Self {
        Self {
            accel_methods: accel.to_methods(),
            ..self.clone()
        }
    }
}

/// One broken rule found by [`validate_attributes`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every attribute invariant against `vocab`. Returns the violations
/// sorted by field, so the result does not depend on insertion order.
pub fn validate_attributes(attrs: &KeyAttributes, vocab: &Vocabulary) -> Vec<Violation> {
    let mut out = Vec::new();
    let ident = |out: &mut Vec<Violation>, field: &str, category: &str, value: &str| {
        if !vocab.contains(category, value) {
            out.push(Violation::new(field, format!("unknown identifier '{value}'")));
        }
    };
    ident(&mut out, "pipeline_class", "pipelines", &attrs.pipeline_class);
    ident(&mut out, "model_id", "models", &attrs.model_id);
    ident(&mut out, "scheduler_class", "schedulers", &attrs.scheduler_class);

    if attrs.num_inference_steps == 0 {
        out.push(Violation::new("num_inference_steps", "must be positive"));
    }
    for (side, value) in [("width", attrs.resolution.width), ("height", attrs.resolution.height)] {
        let field = format!("resolution.{side}");
        if !(MIN_SIDE..=MAX_SIDE).contains(&value) {
            out.push(Violation::new(&field, format!("outside [{MIN_SIDE}, {MAX_SIDE}]")));
        }
        if value % 8 != 0 {
            out.push(Violation::new(&field, format!("{side} not multiple of 8")));
        }
    }
    for p in &attrs.preprocessors {
        if !vocab.contains("preprocessors", p) {
            out.push(Violation::new("preprocessors", format!("unknown preprocessor '{p}'")));
        }
    }
    for (method, params) in &attrs.accel_methods {
        let field = format!("accel_methods.{method}");
        let Some(spec) = vocab.method(method) else {
            out.push(Violation::new(field, "unknown method"));
            continue;
        };
        for required in &spec.params {
            if !params.contains_key(&required.name) {
                out.push(Violation::new(
                    format!("{field}.{}", required.name),
                    "required parameter missing",
                ));
            }
        }
        for (name, &value) in params {
            let pfield = format!("{field}.{name}");
            match spec.param(name) {
                None => out.push(Violation::new(pfield, "unknown parameter")),
                Some(ps) => {
                    if let Some(rule) = ps.kind.check(value) {
                        out.push(Violation::new(pfield, rule));
                    }
                }
            }
        }
        if method == GATED_ACTIVATION {
            if let Some(&g) = params.get(GATE_STEP) {
                if g > f64::from(attrs.num_inference_steps) {
                    out.push(Violation::new(
                        format!("{field}.{GATE_STEP}"),
                        "exceeds num_inference_steps",
                    ));
                }
            }
        }
    }
    out.sort();
    out
}

/// Typed view of the four known acceleration methods.
///
/// `None`/`false` means the method is not applied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccelConfig {
    pub merge_ratio: Option<f64>,
    pub cache_interval: Option<u32>,
    pub gate_step: Option<u32>,
    pub half_precision: bool,
}

impl AccelConfig {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Unknown methods and malformed parameters are ignored; run
    /// [`validate_attributes`] first when that matters.
    pub fn from_methods(methods: &BTreeMap<String, MethodParams>) -> Self {
        let count = |m: &str, p: &str| {
            methods
                .get(m)
                .and_then(|ps| ps.get(p))
                .filter(|v| v.is_finite() && **v >= 1.0)
                .map(|v| *v as u32)
        };
        Self {
            merge_ratio: methods.get(TOKEN_MERGING).and_then(|ps| ps.get(MERGE_RATIO)).copied(),
            cache_interval: count(FEATURE_REUSE, CACHE_INTERVAL),
            gate_step: count(GATED_ACTIVATION, GATE_STEP),
            half_precision: methods.contains_key(HALF_PRECISION),
        }
    }

    pub fn to_methods(&self) -> BTreeMap<String, MethodParams> {
        let mut out = BTreeMap::new();
        let one = |k: &str, v: f64| MethodParams::from([(k.to_string(), v)]);
        if let Some(r) = self.merge_ratio {
            out.insert(TOKEN_MERGING.to_string(), one(MERGE_RATIO, r));
        }
        if let Some(k) = self.cache_interval {
            out.insert(FEATURE_REUSE.to_string(), one(CACHE_INTERVAL, f64::from(k)));
        }
        if let Some(g) = self.gate_step {
            out.insert(GATED_ACTIVATION.to_string(), one(GATE_STEP, f64::from(g)));
        }
        if self.half_precision {
            out.insert(HALF_PRECISION.to_string(), MethodParams::new());
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.to_methods().is_empty()
    }
}

impl fmt::Display for AccelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(r) = self.merge_ratio {
            parts.push(format!("{TOKEN_MERGING}(merge_ratio={r})"));
        }
        if let Some(k) = self.cache_interval {
            parts.push(format!("{FEATURE_REUSE}(cache_interval={k})"));
        }
        if let Some(g) = self.gate_step {
            parts.push(format!("{GATED_ACTIVATION}(gate_step={g})"));
        }
        if self.half_precision {
            parts.push(HALF_PRECISION.to_string());
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(" + "))
        }
    }
}

/// The quantitative requirement of a task, if it has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    None,
    Speedup { required: f64 },
    Latency { bound: f64 },
}

/// One benchmark task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub level: u8,
    pub prompt: String,
    pub hardware_tag: String,
    #[serde(default = "default_quality_threshold")]
    pub quality_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup_requirement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    pub reference_code: String,
    pub ground_truth: KeyAttributes,
}

fn default_quality_threshold() -> f64 {
    DEFAULT_QUALITY_THRESHOLD
}

impl TaskSpec {
    pub fn target(&self) -> Target {
        match (self.speedup_requirement, self.latency_bound) {
            (Some(required), _) => Target::Speedup { required },
            (None, Some(bound)) => Target::Latency { bound },
            (None, None) => Target::None,
        }
    }

    /// Levels 4 and 5 carry quantitative targets and go through the
    /// optimization loop.
    pub fn is_optimization(&self) -> bool {
        self.level >= 4
    }

    pub fn is_hard(&self) -> bool {
        self.difficulty == Some(Difficulty::Hard)
    }
}
