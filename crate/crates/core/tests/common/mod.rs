//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use accelforge_core::assess::{extract_attributes, match_attributes, PartialAttributes};
use accelforge_core::task::{Conditioning, KeyAttributes};
use regex::Regex;
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug, Deserialize)]
pub struct Labels {
    pub truth: BTreeMap<String, KeyAttributes>,
    pub file: Vec<LabeledFile>,
}

#[derive(Debug, Deserialize)]
pub struct LabeledFile {
    pub name: String,
    pub truth: String,
    pub mismatches: BTreeSet<String>,
    pub extraneous_code: bool,
    pub extraneous: Vec<String>,
    pub expected: PartialAttributes,
}

pub fn stage1_labels() -> Labels {
    let text = std::fs::read_to_string(fixtures().join("stage1/labels.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

pub fn stage1_source(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("stage1").join(name)).unwrap()
}

/// A second extractor written without the rule file: plain regexes over
/// comment-stripped text, last match wins.
pub fn regex_oracle(source: &str) -> PartialAttributes {
    let comment = Regex::new(r"(?m)#.*$").unwrap();
    let text = comment.replace_all(source, "");
    let last = |pat: &str| -> Option<Vec<String>> {
        Regex::new(pat).unwrap().captures_iter(&text).last().map(|c| {
            c.iter().skip(1).map(|m| m.map_or(String::new(), |m| m.as_str().to_string())).collect()
        })
    };
    let int = |pat: &str| last(pat).map(|v| v[0].parse::<u32>().unwrap());
    let mut out = PartialAttributes::default();
    if let Some(v) = last(r#"(\w+Pipeline)\.from_pretrained\(\s*"([^"]+)""#) {
        out.pipeline_class = Some(v[0].clone());
        out.model_id = Some(v[1].rsplit('/').next().unwrap().to_string());
    }
    out.scheduler_class = last(r"(\w+Scheduler)\.from_config").map(|v| v[0].clone());
    out.num_inference_steps = int(r"num_inference_steps\s*=\s*(\d+)");
    out.width = int(r"\bwidth\s*=\s*(\d+)");
    out.height = int(r"\bheight\s*=\s*(\d+)");
    // the generation call is the one that carries prompt= or class_labels=
    let call = Regex::new(r"pipe\(([^)]*(prompt|class_labels)\s*=[^)]*)\)").unwrap();
    if let Some(c) = call.captures_iter(&text).last() {
        let args = &c[1];
        out.conditioning = Some(if args.contains("strength=") {
            Conditioning::Img2img
        } else if args.contains("class_labels=") {
            Conditioning::Class2img
        } else {
            Conditioning::Text2img
        });
    }
    if Regex::new(r"CannyDetector\(|cv2\.Canny\(").unwrap().is_match(&text) {
        out.preprocessors.insert("canny".into());
    }
    let mut method = |name: &str, present: bool, params: Vec<(&str, Option<f64>)>| {
        if present {
            let p: BTreeMap<String, f64> = params.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect();
            out.accel_methods.insert(name.to_string(), p);
        }
    };
    let num = |pat: &str| last(pat).map(|v| v[0].parse::<f64>().unwrap());
    method("token_merging", text.contains("tomesd.apply_patch("), vec![("merge_ratio", num(r"tomesd\.apply_patch\([^)]*ratio\s*=\s*([0-9.]+)"))]);
    method("feature_reuse", Regex::new(r"DeepCache\w*Helper\(").unwrap().is_match(&text), vec![("cache_interval", num(r"cache_interval\s*=\s*(\d+)"))]);
    method("gated_activation", Regex::new(r"Tgate\w*Loader\(").unwrap().is_match(&text), vec![("gate_step", num(r"gate_step\s*=\s*(\d+)"))]);
    method(
        "half_precision",
        Regex::new(r"torch_dtype\s*=\s*torch\.(float16|half)|\.half\(\)").unwrap().is_match(&text),
        vec![],
    );
    out
}

pub struct Stage1Outcome {
    pub name: String,
    pub extraction_ok: bool,
    pub oracle_ok: bool,
    pub mismatches_ok: bool,
    pub extraneous_ok: bool,
    pub false_failure: bool,
}

pub fn check_stage1_file(labels: &Labels, f: &LabeledFile) -> Stage1Outcome {
    let src = stage1_source(&f.name);
    let truth = &labels.truth[&f.truth];
    let (found, _) = extract_attributes(&src).unwrap();
    let verdict = match_attributes(&found, truth);
    let got: BTreeSet<String> = verdict.mismatches.iter().map(|m| m.attribute.clone()).collect();
    Stage1Outcome {
        name: f.name.clone(),
        extraction_ok: found == f.expected,
        oracle_ok: regex_oracle(&src) == f.expected,
        mismatches_ok: got == f.mismatches,
        extraneous_ok: verdict.extraneous == f.extraneous,
        false_failure: f.mismatches.is_empty() && !verdict.passed,
    }
}
