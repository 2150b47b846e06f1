//! Extraction rule definitions, loaded from a TOML rule file.

use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::scan::{Expr, SourceModel};

const BUILTIN: &str = include_str!("../../data/extraction_rules.toml");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule for `{attribute}`: bad regex: {source}")]
    Regex {
        attribute: String,
        #[source]
        source: regex::Error,
    },
    #[error("rule for `{attribute}`: {reason}")]
    Invalid { attribute: String, reason: String },
}

/// Where a captured value goes in the extracted attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrPath {
    PipelineClass,
    ModelId,
    SchedulerClass,
    NumInferenceSteps,
    Width,
    Height,
    Conditioning,
    Preprocessors,
    Method(String),
    MethodParam(String, String),
}

impl AttrPath {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pipeline_class" => Self::PipelineClass,
            "model_id" => Self::ModelId,
            "scheduler_class" => Self::SchedulerClass,
            "num_inference_steps" => Self::NumInferenceSteps,
            "resolution.width" => Self::Width,
            "resolution.height" => Self::Height,
            "conditioning" => Self::Conditioning,
            "preprocessors" => Self::Preprocessors,
            other => {
                let rest = other.strip_prefix("accel_methods.")?;
                match rest.split_once('.') {
                    None if !rest.is_empty() => Self::Method(rest.to_string()),
                    Some((m, p)) if !m.is_empty() && !p.is_empty() && !p.contains('.') => {
                        Self::MethodParam(m.to_string(), p.to_string())
                    }
                    _ => return None,
                }
            }
        })
    }

    /// Set-valued attributes accumulate captures instead of conflicting.
    pub fn is_set(&self) -> bool {
        matches!(self, Self::Preprocessors | Self::Method(_))
    }

    pub fn name(&self) -> String {
        match self {
            Self::PipelineClass => "pipeline_class".into(),
            Self::ModelId => "model_id".into(),
            Self::SchedulerClass => "scheduler_class".into(),
            Self::NumInferenceSteps => "num_inference_steps".into(),
            Self::Width => "resolution.width".into(),
            Self::Height => "resolution.height".into(),
            Self::Conditioning => "conditioning".into(),
            Self::Preprocessors => "preprocessors".into(),
            Self::Method(m) => format!("accel_methods.{m}"),
            Self::MethodParam(m, p) => format!("accel_methods.{m}.{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Call,
    Kwarg,
    Assign,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalizer {
    Identity,
    Basename,
    Integer,
    Number,
    Constant,
    Map { table: std::collections::BTreeMap<String, String> },
}

impl Normalizer {
    /// Maps a raw capture to its canonical text; `Err` explains a rejected
    /// capture.
    pub fn apply(&self, raw: &str) -> Result<String, String> {
        match self {
            Normalizer::Identity | Normalizer::Constant => Ok(raw.to_string()),
            Normalizer::Basename => Ok(raw.rsplit('/').next().unwrap_or(raw).to_string()),
            Normalizer::Integer => raw
                .parse::<u32>()
                .map(|v| v.to_string())
                .map_err(|_| format!("'{raw}' is not a non-negative integer")),
            Normalizer::Number => raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(|v| v.to_string())
                .ok_or_else(|| format!("'{raw}' is not a number")),
            Normalizer::Map { table } => table
                .get(raw)
                .cloned()
                .ok_or_else(|| format!("'{raw}' has no mapping")),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    kind: PatternKind,
    callee: Option<String>,
    target: Option<String>,
    keyword: Option<String>,
    arg: Option<usize>,
    value: Option<String>,
    equals: Option<String>,
    emit: Option<String>,
    priority: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    attribute: String,
    normalizer: Normalizer,
    vocabulary: Option<String>,
    patterns: Vec<RawPattern>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRuleFile {
    rule: Vec<RawRule>,
}

/// What a pattern takes from a matching call site.
#[derive(Debug, Clone)]
enum CallCapture {
    CalleeGroup,
    Arg(usize),
    Keyword(String),
    Presence,
}

#[derive(Debug, Clone)]
pub struct Pattern {
    kind: PatternKind,
    callee: Option<Regex>,
    target: Option<Regex>,
    capture: CallCapture,
    value: Option<Regex>,
    equals: Option<Regex>,
    emit: Option<String>,
    /// Lower wins when captures share a source position.
    pub priority: u32,
}

/// One raw capture with its source position.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub raw: String,
    pub offset: usize,
}

fn full(re: &str, attribute: &str) -> Result<Regex, RuleError> {
    Regex::new(&format!("^(?:{re})$")).map_err(|source| RuleError::Regex {
        attribute: attribute.to_string(),
        source,
    })
}

fn group_or_whole(re: &Regex, text: &str) -> Option<String> {
    let caps = re.captures(text)?;
    Some(caps.name("v").map_or(text, |m| m.as_str()).to_string())
}

impl Pattern {
    fn compile(raw: RawPattern, index: usize, attribute: &str) -> Result<Self, RuleError> {
        let invalid = |reason: &str| RuleError::Invalid {
            attribute: attribute.to_string(),
            reason: reason.to_string(),
        };
        let callee = raw.callee.as_deref().map(|r| full(r, attribute)).transpose()?;
        let target = raw.target.as_deref().map(|r| full(r, attribute)).transpose()?;
        let capture = match raw.kind {
            PatternKind::Call => {
                if callee.is_none() {
                    return Err(invalid("call pattern needs `callee`"));
                }
                match (&raw.keyword, raw.arg) {
                    (Some(_), Some(_)) => return Err(invalid("`keyword` and `arg` are exclusive")),
                    (Some(k), None) => CallCapture::Keyword(k.clone()),
                    (None, Some(a)) => CallCapture::Arg(a),
                    (None, None) if callee.as_ref().is_some_and(|r| r.capture_names().flatten().any(|n| n == "v")) => {
                        CallCapture::CalleeGroup
                    }
                    (None, None) => CallCapture::Presence,
                }
            }
            PatternKind::Kwarg => CallCapture::Keyword(
                raw.keyword.clone().ok_or_else(|| invalid("kwarg pattern needs `keyword`"))?,
            ),
            PatternKind::Assign => {
                if target.is_none() {
                    return Err(invalid("assign pattern needs `target`"));
                }
                CallCapture::Presence
            }
        };
        Ok(Self {
            kind: raw.kind,
            callee,
            target,
            capture,
            value: raw.value.as_deref().map(|r| full(r, attribute)).transpose()?,
            equals: raw.equals.as_deref().map(|r| full(r, attribute)).transpose()?,
            emit: raw.emit,
            priority: raw.priority.unwrap_or(index as u32),
        })
    }

    /// Raw text of an argument expression. Calls only count when a `value`
    /// regex asks for their callee.
    fn expr_text(&self, expr: &Expr) -> Option<String> {
        let text = match expr {
            Expr::Call(c) if self.value.is_some() => c.clone(),
            other => match other.literal() {
                Some(t) => t.to_string(),
                // A bare presence check with a constant emit accepts any expression.
                None if self.emit.is_some() && self.equals.is_none() && self.value.is_none() => String::new(),
                None => return None,
            },
        };
        self.refine(text)
    }

    fn refine(&self, text: String) -> Option<String> {
        if let Some(eq) = &self.equals {
            if !eq.is_match(&text) {
                return None;
            }
        }
        let text = match &self.value {
            Some(re) => group_or_whole(re, &text)?,
            None => text,
        };
        Some(self.emit.clone().unwrap_or(text))
    }

    /// All captures of this pattern in `model`, in source order.
    pub fn captures(&self, model: &SourceModel) -> Vec<RawCapture> {
        let mut out = Vec::new();
        match self.kind {
            PatternKind::Call | PatternKind::Kwarg => {
                for call in &model.calls {
                    if let Some(re) = &self.callee {
                        if !re.is_match(&call.callee) {
                            continue;
                        }
                    }
                    let raw = match &self.capture {
                        CallCapture::CalleeGroup => self
                            .callee
                            .as_ref()
                            .and_then(|re| group_or_whole(re, &call.callee))
                            .and_then(|t| self.refine(t)),
                        CallCapture::Arg(i) => call.positional.get(*i).and_then(|e| self.expr_text(e)),
                        CallCapture::Keyword(k) => call.keyword(k).and_then(|e| self.expr_text(e)),
                        CallCapture::Presence => self.refine(String::new()),
                    };
                    if let Some(raw) = raw {
                        out.push(RawCapture { raw, offset: call.offset });
                    }
                }
            }
            PatternKind::Assign => {
                let target = self.target.as_ref().expect("checked at compile time");
                for a in &model.assignments {
                    if target.is_match(&a.target) {
                        if let Some(raw) = self.expr_text(&a.value) {
                            out.push(RawCapture { raw, offset: a.offset });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionRule {
    pub attribute: AttrPath,
    pub patterns: Vec<Pattern>,
    pub normalizer: Normalizer,
    pub vocabulary: Option<String>,
}

/// An ordered, compiled set of extraction rules.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub rules: Vec<ExtractionRule>,
}

impl RuleSet {
    pub fn builtin() -> &'static RuleSet {
        static RULES: OnceLock<RuleSet> = OnceLock::new();
        RULES.get_or_init(|| RuleSet::from_toml_str(BUILTIN).expect("bundled rules are valid"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RuleError> {
        let file: RawRuleFile = toml::from_str(text)?;
        let rules = file
            .rule
            .into_iter()
            .map(|r| {
                let attribute = AttrPath::parse(&r.attribute).ok_or_else(|| RuleError::Invalid {
                    attribute: r.attribute.clone(),
                    reason: "unknown attribute path".into(),
                })?;
                if r.patterns.is_empty() {
                    return Err(RuleError::Invalid {
                        attribute: r.attribute.clone(),
                        reason: "at least one pattern required".into(),
                    });
                }
                let patterns = r
                    .patterns
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| Pattern::compile(p, i, &r.attribute))
                    .collect::<Result<_, _>>()?;
                Ok(ExtractionRule {
                    attribute,
                    patterns,
                    normalizer: r.normalizer,
                    vocabulary: r.vocabulary,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules })
    }
}
