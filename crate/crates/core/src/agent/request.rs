//! The natural-language task request format.
//!
//! Task prompts are written by [`describe_request`]. [`parse_request`] is the
//! reading side, used by the simulated developer; it is deliberately a
//! separate regex reader, not a shared data structure.

use std::fmt::Write;
use std::sync::OnceLock;

use regex::Regex;

use crate::assess::PartialAttributes;
use crate::task::{
    AccelConfig, KeyAttributes, MethodParams, Target, CACHE_INTERVAL, FEATURE_REUSE, GATED_ACTIVATION, GATE_STEP,
    HALF_PRECISION, MERGE_RATIO, TOKEN_MERGING,
};

fn fmt_ratio(r: f64) -> String {
    let s = format!("{r:.4}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// Writes the request for `attrs`. Acceleration methods already in `attrs`
/// are stated as required; `target` adds the optimization goal.
pub fn describe_request(attrs: &KeyAttributes, target: &Target, quality_threshold: f64) -> String {
    let mut s = String::new();
    let article = if attrs.conditioning.as_str().starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    let _ = write!(
        s,
        "Write {article} {} script using {} with the {} model and the {} scheduler, running {} inference steps at {}x{}.",
        attrs.conditioning,
        attrs.pipeline_class,
        attrs.model_id,
        attrs.scheduler_class,
        attrs.num_inference_steps,
        attrs.resolution.width,
        attrs.resolution.height
    );
    for p in &attrs.preprocessors {
        let _ = write!(s, " Use {p} preprocessing.");
    }
    let accel = attrs.accel_config();
    if let Some(r) = accel.merge_ratio {
        let _ = write!(s, " Apply token merging with a merge ratio of {}.", fmt_ratio(r));
    }
    if let Some(k) = accel.cache_interval {
        let _ = write!(s, " Apply feature reuse with a cache interval of {k}.");
    }
    if let Some(g) = accel.gate_step {
        let _ = write!(s, " Apply gated activation from step {g}.");
    }
    if accel.half_precision {
        s.push_str(" Run in half precision.");
    }
    let pct = fmt_ratio(quality_threshold * 100.0);
    match *target {
        Target::None => {}
        Target::Speedup { required } => {
            let _ = write!(
                s,
                " Accelerate it to at least {}x speedup over the unaccelerated version while keeping quality loss within {pct}%.",
                fmt_ratio(required)
            );
        }
        Target::Latency { bound } => {
            let _ = write!(
                s,
                " Accelerate it so that latency stays under {} s while keeping quality loss within {pct}%.",
                fmt_ratio(bound)
            );
        }
    }
    s
}

/// What a reader recovers from a request.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedRequest {
    pub attributes: PartialAttributes,
    /// Target, if the request states one.
    pub target: Option<Target>,
    pub quality_threshold: Option<f64>,
}

struct Patterns {
    head: Regex,
    conditioning: Regex,
    pre: Regex,
    merge: Regex,
    cache: Regex,
    gate: Regex,
    speedup: Regex,
    latency: Regex,
    loss: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        head: Regex::new(
            r"using (\w+) with the ([\w.\-]+) model and the (\w+) scheduler, running (\d+) inference steps at (\d+)x(\d+)",
        )
        .unwrap(),
        conditioning: Regex::new(r"\b(text2img|class2img|img2img) script").unwrap(),
        pre: Regex::new(r"Use (\w+) preprocessing").unwrap(),
        merge: Regex::new(r"merge ratio of ([0-9.]+)").unwrap(),
        cache: Regex::new(r"cache interval of (\d+)").unwrap(),
        gate: Regex::new(r"gated activation from step (\d+)").unwrap(),
        speedup: Regex::new(r"at least ([0-9.]+)x speedup").unwrap(),
        latency: Regex::new(r"latency stays under ([0-9.]+) s").unwrap(),
        loss: Regex::new(r"quality loss within ([0-9.]+)%").unwrap(),
    })
}

fn num<T: std::str::FromStr>(re: &Regex, text: &str) -> Option<T> {
    re.captures(text)?.get(1)?.as_str().trim_end_matches('.').parse().ok()
}

pub fn parse_request(text: &str) -> ParsedRequest {
    let p = patterns();
    let mut a = PartialAttributes::default();
    if let Some(c) = p.head.captures(text) {
        a.pipeline_class = Some(c[1].to_string());
        a.model_id = Some(c[2].to_string());
        a.scheduler_class = Some(c[3].to_string());
        a.num_inference_steps = c[4].parse().ok();
        a.width = c[5].parse().ok();
        a.height = c[6].parse().ok();
    }
    a.conditioning = p
        .conditioning
        .captures(text)
        .and_then(|c| crate::task::Conditioning::parse(&c[1]));
    a.preprocessors = p.pre.captures_iter(text).map(|c| c[1].to_string()).collect();
    let one = |k: &str, v: f64| MethodParams::from([(k.to_string(), v)]);
    if let Some(r) = num::<f64>(&p.merge, text) {
        a.accel_methods.insert(TOKEN_MERGING.into(), one(MERGE_RATIO, r));
    }
    if let Some(k) = num::<f64>(&p.cache, text) {
        a.accel_methods.insert(FEATURE_REUSE.into(), one(CACHE_INTERVAL, k));
    }
    if let Some(g) = num::<f64>(&p.gate, text) {
        a.accel_methods.insert(GATED_ACTIVATION.into(), one(GATE_STEP, g));
    }
    if text.contains("Run in half precision") {
        a.accel_methods.insert(HALF_PRECISION.into(), MethodParams::new());
    }
    let target = if let Some(u) = num::<f64>(&p.speedup, text) {
        Some(Target::Speedup { required: u })
    } else {
        num::<f64>(&p.latency, text).map(|bound| Target::Latency { bound })
    };
    ParsedRequest {
        attributes: a,
        target,
        quality_threshold: num::<f64>(&p.loss, text).map(|pct| pct / 100.0),
    }
}

/// Convenience for callers that only need the typed acceleration view.
pub fn requested_accel(req: &ParsedRequest) -> AccelConfig {
    AccelConfig::from_methods(&req.attributes.accel_methods)
}
