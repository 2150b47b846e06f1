use serde::{Deserialize, Serialize};

use super::extract::PartialAttributes;
use crate::task::KeyAttributes;

/// Float method parameters compare within this absolute tolerance.
pub const PARAM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub attribute: String,
    pub expected: String,
    /// `None` when the attribute was not found at all.
    pub found: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub passed: bool,
    pub mismatches: Vec<Mismatch>,
    /// Attributes present in the candidate but not required by the truth.
    pub extraneous: Vec<String>,
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

/// Compares extracted attributes against ground truth. Every truth
/// component must be found with an equal value; anything extra is listed in
/// `extraneous` and never fails the match.
pub fn match_attributes(found: &PartialAttributes, truth: &KeyAttributes) -> MatchVerdict {
    let mut mismatches = Vec::new();
    let mut extraneous = Vec::new();
    let mut scalar = |attribute: &str, expected: String, got: Option<String>| {
        if got.as_deref() != Some(expected.as_str()) {
            mismatches.push(Mismatch {
                attribute: attribute.to_string(),
                expected,
                found: got,
            });
        }
    };
    scalar("pipeline_class", truth.pipeline_class.clone(), found.pipeline_class.clone());
    scalar("model_id", truth.model_id.clone(), found.model_id.clone());
    scalar("scheduler_class", truth.scheduler_class.clone(), found.scheduler_class.clone());
    scalar(
        "num_inference_steps",
        truth.num_inference_steps.to_string(),
        found.num_inference_steps.map(|n| n.to_string()),
    );
    let res = match (found.width, found.height) {
        (None, None) => None,
        (w, h) => Some(format!(
            "{}x{}",
            w.map_or("?".to_string(), |v| v.to_string()),
            h.map_or("?".to_string(), |v| v.to_string())
        )),
    };
    scalar("resolution", truth.resolution.to_string(), res);
    scalar(
        "conditioning",
        truth.conditioning.to_string(),
        found.conditioning.map(|c| c.to_string()),
    );

    for p in &truth.preprocessors {
        if !found.preprocessors.contains(p) {
            mismatches.push(Mismatch {
                attribute: format!("preprocessors.{p}"),
                expected: "present".into(),
                found: None,
            });
        }
    }
    extraneous.extend(
        found
            .preprocessors
            .difference(&truth.preprocessors)
            .map(|p| format!("preprocessors.{p}")),
    );

    for (method, params) in &truth.accel_methods {
        let Some(got) = found.accel_methods.get(method) else {
            mismatches.push(Mismatch {
                attribute: format!("accel_methods.{method}"),
                expected: "present".into(),
                found: None,
            });
            continue;
        };
        for (name, &want) in params {
            let attribute = format!("accel_methods.{method}.{name}");
            match got.get(name) {
                Some(&v) if (v - want).abs() <= PARAM_TOLERANCE => {}
                other => mismatches.push(Mismatch {
                    attribute,
                    expected: fmt_num(want),
                    found: other.map(|v| fmt_num(*v)),
                }),
            }
        }
        extraneous.extend(
            got.keys()
                .filter(|k| !params.contains_key(*k))
                .map(|k| format!("accel_methods.{method}.{k}")),
        );
    }
    extraneous.extend(
        found
            .accel_methods
            .keys()
            .filter(|m| !truth.accel_methods.contains_key(*m))
            .map(|m| format!("accel_methods.{m}")),
    );

    MatchVerdict {
        passed: mismatches.is_empty(),
        mismatches,
        extraneous,
    }
}
