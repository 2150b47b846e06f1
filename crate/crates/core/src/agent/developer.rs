//! A seeded stand-in for the language model that plays all three roles.
//!
//! It reads the same tagged prompts a real model gets and answers in the
//! same formats. Mistakes are drawn from the per-call seed: planner slips
//! (a wrong attribute), code defects (scripts that fail to run) and failed
//! repairs. Without knowledge-base context it slips and breaks code more
//! often and samples acceleration settings from a wider, worse prior.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompts::{config_toml, section, section_attr, wrap};
use super::request::parse_request;
use crate::assess::PartialAttributes;
use crate::llm::{CallContext, Message, Responder, Stage};
use crate::render::render_program;
use crate::task::{
    AccelConfig, Conditioning, KeyAttributes, Resolution, Vocabulary, GATED_ACTIVATION, GATE_STEP, MERGE_RATIO,
    TOKEN_MERGING,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeveloperProfile {
    /// Chance that a generated script does not run, with and without a
    /// reference template in the prompt.
    pub defect_rate: f64,
    pub defect_rate_unguided: f64,
    /// Chance that a repair call actually fixes the script.
    pub repair_rate: f64,
    /// Chance that a fresh plan gets one base attribute wrong, with and
    /// without insights in the prompt.
    pub slip_rate: f64,
    pub slip_rate_unguided: f64,
    /// Chance that a planning answer omits its `<config>` block.
    pub malformed_rate: f64,
}

impl Default for DeveloperProfile {
    fn default() -> Self {
        Self {
            defect_rate: 0.15,
            defect_rate_unguided: 0.4,
            repair_rate: 0.75,
            slip_rate: 0.03,
            slip_rate_unguided: 0.15,
            malformed_rate: 0.0,
        }
    }
}

impl DeveloperProfile {
    /// Never slips and never writes broken code.
    pub fn flawless() -> Self {
        Self {
            defect_rate: 0.0,
            defect_rate_unguided: 0.0,
            repair_rate: 1.0,
            slip_rate: 0.0,
            slip_rate_unguided: 0.0,
            malformed_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulatedDeveloper {
    pub profile: DeveloperProfile,
}

impl SimulatedDeveloper {
    pub fn new(profile: DeveloperProfile) -> Self {
        Self { profile }
    }
}

fn user_text(messages: &[Message]) -> String {
    messages
        .iter()
        .filter(|m| m.role == crate::llm::Role::User)
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn fallback_attrs() -> KeyAttributes {
    KeyAttributes {
        pipeline_class: "StableDiffusionPipeline".into(),
        model_id: "stable-diffusion-v1-5".into(),
        scheduler_class: "PNDMScheduler".into(),
        num_inference_steps: 50,
        resolution: Resolution::new(512, 512),
        conditioning: Conditioning::Text2img,
        preprocessors: Default::default(),
        accel_methods: Default::default(),
    }
}

fn complete(p: &PartialAttributes) -> KeyAttributes {
    p.complete_with(&fallback_attrs())
}

/// Reads the first `<config>` block found inside `<tag>` (or at top level
/// when `tag` is `None`).
fn config_in(text: &str, tag: Option<&str>) -> Option<PartialAttributes> {
    let scope = match tag {
        Some(t) => section(text, t)?,
        None => text,
    };
    toml::from_str(section(scope, "config")?).ok()
}

fn plan_answer(prose: &str, config: &KeyAttributes, baseline: Option<&KeyAttributes>) -> String {
    let mut s = wrap("plan", prose);
    if let Some(b) = baseline {
        s.push('\n');
        s.push_str(&wrap("baseline", &config_toml(&PartialAttributes::from_full(b))));
    }
    s.push('\n');
    s.push_str(&wrap("config", &config_toml(&PartialAttributes::from_full(config))));
    s
}

fn describe_accel(a: &AccelConfig) -> String {
    if a.is_identity() {
        "Run the pipeline as requested, without acceleration.".into()
    } else {
        format!("Apply {a}, keeping every requested attribute unchanged.")
    }
}

fn others<'a>(set: &'a std::collections::BTreeSet<String>, not: &str) -> Vec<&'a str> {
    set.iter().map(String::as_str).filter(|s| *s != not).collect()
}

/// Gets one base attribute wrong.
fn slip(a: &mut KeyAttributes, rng: &mut ChaCha8Rng) {
    let vocab = Vocabulary::builtin();
    match rng.random_range(0..3) {
        0 => {
            let alts = others(&vocab.schedulers, &a.scheduler_class);
            a.scheduler_class = alts[rng.random_range(0..alts.len())].to_string();
        }
        1 => a.num_inference_steps = if a.num_inference_steps == 50 { 30 } else { 50 },
        _ => {
            let r = a.resolution;
            a.resolution = if r.width == 512 { Resolution::new(768, 768) } else { Resolution::new(512, 512) };
        }
    }
}

fn accel_of(a: &KeyAttributes) -> AccelConfig {
    a.accel_config()
}

/// Samples a fresh acceleration config for `n` steps.
fn sample_accel(n: u32, guided: bool, rng: &mut ChaCha8Rng) -> AccelConfig {
    let mut c = AccelConfig::identity();
    c.half_precision = rng.random_bool(0.5);
    if rng.random_bool(0.5) {
        c.cache_interval = Some(if guided { rng.random_range(2..=4) } else { rng.random_range(2..=8) });
    }
    if rng.random_bool(0.4) {
        let top = if guided { 4 } else { 7 };
        c.merge_ratio = Some(f64::from(rng.random_range(1..=top)) / 10.0);
    }
    if rng.random_bool(0.3) {
        let lo = if guided { 0.5 } else { 0.2 };
        let u: f64 = rng.random_range(lo..0.95);
        c.gate_step = Some(((f64::from(n) * u).round() as u32).clamp(1, n));
    }
    c
}

struct FeedbackView {
    loss_over: Option<f64>,
    /// Relative efficiency shortfall, e.g. 0.2 for 20% short.
    short: Option<f64>,
    fixes: Vec<(String, String)>,
}

fn feedback_patterns() -> &'static [Regex; 4] {
    static P: OnceLock<[Regex; 4]> = OnceLock::new();
    P.get_or_init(|| {
        [
            Regex::new(r"quality: measured loss (-?[0-9.]+)% vs limit ([0-9.]+)%").unwrap(),
            Regex::new(r"speedup: measured ([0-9.]+)x vs required ([0-9.]+)x").unwrap(),
            Regex::new(r"latency: measured ([0-9.]+) s vs bound ([0-9.]+) s").unwrap(),
            Regex::new(r"(?m)^mismatch: (\S+) expected (\S+) found").unwrap(),
        ]
    })
}

fn read_feedback(text: &str) -> FeedbackView {
    let [q, u, l, m] = feedback_patterns();
    let pair = |re: &Regex| -> Option<(f64, f64)> {
        let c = re.captures(text)?;
        Some((c[1].parse().ok()?, c[2].parse().ok()?))
    };
    // the verdict words decide; the numbers only size the correction
    let loss_over = pair(q)
        .filter(|_| text.contains("-> above limit"))
        .map(|(m, lim)| ((m - lim) / lim.max(1e-9)).max(0.0));
    let short = pair(u)
        .filter(|_| text.contains("-> short by"))
        .map(|(m, req)| (1.0 - m / req).max(0.0))
        .or_else(|| pair(l).filter(|_| text.contains("-> over by")).map(|(m, b)| (1.0 - b / m).max(0.0)));
    let fixes = m.captures_iter(text).map(|c| (c[1].to_string(), c[2].to_string())).collect();
    FeedbackView { loss_over, short, fixes }
}

fn apply_fix(a: &mut KeyAttributes, attr: &str, want: &str) {
    match attr {
        "pipeline_class" => a.pipeline_class = want.into(),
        "model_id" => a.model_id = want.into(),
        "scheduler_class" => a.scheduler_class = want.into(),
        "num_inference_steps" => {
            if let Ok(n) = want.parse() {
                a.num_inference_steps = n;
            }
        }
        "resolution" => {
            if let Some((w, h)) = want.split_once('x') {
                if let (Ok(w), Ok(h)) = (w.parse(), h.parse()) {
                    a.resolution = Resolution::new(w, h);
                }
            }
        }
        "conditioning" => {
            if let Some(c) = Conditioning::parse(want) {
                a.conditioning = c;
            }
        }
        other => {
            if let Some(p) = other.strip_prefix("preprocessors.") {
                a.preprocessors.insert(p.to_string());
            } else if let Some(rest) = other.strip_prefix("accel_methods.") {
                let mut it = rest.splitn(2, '.');
                let method = it.next().unwrap_or_default().to_string();
                let params = a.accel_methods.entry(method).or_default();
                if let (Some(name), Ok(v)) = (it.next(), want.parse::<f64>()) {
                    params.insert(name.to_string(), v);
                }
            }
        }
    }
}

/// One move that trades speed for quality.
fn weaken(c: &mut AccelConfig, n: u32, rng: &mut ChaCha8Rng) -> bool {
    let mut opts = Vec::new();
    if c.merge_ratio.is_some() {
        opts.push(0);
    }
    if c.cache_interval.is_some() {
        opts.push(1);
    }
    if c.gate_step.is_some() {
        opts.push(2);
    }
    if opts.is_empty() {
        if c.half_precision {
            c.half_precision = false;
            return true;
        }
        return false;
    }
    match opts[rng.random_range(0..opts.len())] {
        0 => {
            let r = c.merge_ratio.unwrap_or(0.0) - 0.1;
            c.merge_ratio = (r >= 0.05).then(|| (r * 10.0).round() / 10.0);
        }
        1 => {
            let k = c.cache_interval.unwrap_or(2) - 1;
            c.cache_interval = (k >= 2).then_some(k);
        }
        _ => {
            let g = c.gate_step.unwrap_or(n) + (n / 10).max(1);
            c.gate_step = (g < n).then_some(g);
        }
    }
    true
}

/// One move that trades quality for speed.
fn strengthen(c: &mut AccelConfig, n: u32, rng: &mut ChaCha8Rng) {
    let mut opts: Vec<(u8, u32)> = Vec::new();
    if !c.half_precision {
        opts.push((3, 4));
    }
    if c.cache_interval.is_none_or(|k| k < 10) {
        opts.push((1, 2));
    }
    if c.merge_ratio.is_none_or(|r| r < 0.65) {
        opts.push((0, 2));
    }
    if c.gate_step.is_none_or(|g| g > (n / 10).max(1)) {
        opts.push((2, 1));
    }
    let total: u32 = opts.iter().map(|o| o.1).sum();
    if total == 0 {
        return;
    }
    let mut pick = rng.random_range(0..total);
    let choice = opts
        .iter()
        .find(|(_, w)| {
            if pick < *w {
                true
            } else {
                pick -= w;
                false
            }
        })
        .map_or(3, |o| o.0);
    match choice {
        3 => c.half_precision = true,
        1 => c.cache_interval = Some(c.cache_interval.map_or(2, |k| k + 1)),
        0 => c.merge_ratio = Some(c.merge_ratio.map_or(0.1, |r| ((r + 0.1) * 10.0).round() / 10.0)),
        _ => {
            let step = (n / 10).max(1);
            c.gate_step = Some(c.gate_step.map_or(n.saturating_sub(step).max(1), |g| g.saturating_sub(step).max(1)));
        }
    }
}

/// Breaks a script so that it fails to run.
fn inject_defect(source: &str, attrs: &KeyAttributes, rng: &mut ChaCha8Rng) -> String {
    let kind = rng.random_range(0..3);
    match kind {
        0 => {
            // drop the closing parenthesis of the first call line
            let mut out = String::new();
            let mut done = false;
            for line in source.lines() {
                if !done && line.contains("from_pretrained(") && line.ends_with(')') {
                    out.push_str(&line[..line.len() - 1]);
                    done = true;
                } else {
                    out.push_str(line);
                }
                out.push('\n');
            }
            if done { out } else { format!("{source}pipe.to(\"cuda\"\n") }
        }
        1 => {
            let mut bad = attrs.clone();
            bad.resolution = Resolution::new(attrs.resolution.width + 4, attrs.resolution.height);
            render_program(&bad, None)
        }
        _ => {
            let mut bad = attrs.clone();
            if attrs.accel_methods.contains_key(GATED_ACTIVATION) {
                bad.accel_methods.insert(
                    GATED_ACTIVATION.into(),
                    [(GATE_STEP.to_string(), f64::from(attrs.num_inference_steps + 5))].into(),
                );
            } else {
                bad.accel_methods.insert(TOKEN_MERGING.into(), [(MERGE_RATIO.to_string(), 1.5)].into());
            }
            render_program(&bad, None)
        }
    }
}

fn seed_rng(ctx: &CallContext) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(ctx.seed)
}

impl SimulatedDeveloper {
    fn fresh_plan(&self, text: &str, well_formed: bool, rng: &mut ChaCha8Rng) -> String {
        let guided = text.contains("<insights>");
        let optimization = text.contains("<mode>optimization</mode>");
        let req = parse_request(section(text, "request").unwrap_or(text));
        let mut base = complete(&req.attributes);
        let slip_rate = if guided { self.profile.slip_rate } else { self.profile.slip_rate_unguided };
        if rng.random_bool(slip_rate) {
            slip(&mut base, rng);
        }
        if !well_formed {
            return format!("Plan: {}", describe_accel(&accel_of(&base)));
        }
        if !optimization {
            return plan_answer(&describe_accel(&accel_of(&base)), &base, None);
        }
        let baseline = base.without_acceleration();
        let accel = sample_accel(base.num_inference_steps, guided, rng);
        let config = baseline.with_accel(&accel);
        plan_answer(&describe_accel(&accel), &config, Some(&baseline))
    }

    fn refine(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        let parent = config_in(text, Some("plan")).map(|p| complete(&p)).unwrap_or_else(fallback_attrs);
        let baseline = section(section(text, "plan").unwrap_or(""), "baseline")
            .and_then(|b| toml::from_str::<PartialAttributes>(b).ok());
        let fb = read_feedback(section(text, "feedback").unwrap_or(""));
        let mut attrs = parent.clone();
        for (attr, want) in &fb.fixes {
            apply_fix(&mut attrs, attr, want);
        }
        let n = attrs.num_inference_steps;
        let mut c = accel_of(&attrs);
        if let Some(over) = fb.loss_over {
            let moves = if over > 0.6 { 2 } else { 1 };
            for _ in 0..moves {
                weaken(&mut c, n, rng);
            }
        } else if let Some(short) = fb.short {
            let moves = if short > 0.2 { 2 } else { 1 };
            for _ in 0..moves {
                strengthen(&mut c, n, rng);
            }
        } else if fb.fixes.is_empty() && rng.random_bool(0.5) {
            strengthen(&mut c, n, rng);
        }
        let config = attrs.with_accel(&c);
        let base = baseline.map(|b| complete(&b));
        plan_answer(&describe_accel(&c), &config, base.as_ref())
    }

    fn write_code(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        let attrs = config_in(text, Some("plan")).map(|p| complete(&p)).unwrap_or_else(fallback_attrs);
        let reference = section_attr(text, "reference", "id");
        let scaffold = reference.map(|id| format!("reference: {id}"));
        let clean = render_program(&attrs, scaffold.as_deref());
        let rate = if reference.is_some() { self.profile.defect_rate } else { self.profile.defect_rate_unguided };
        let source = if rng.random_bool(rate) { inject_defect(&clean, &attrs, rng) } else { clean };
        wrap("code", &source)
    }

    fn repair(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        let attrs = config_in(text, Some("plan")).map(|p| complete(&p)).unwrap_or_else(fallback_attrs);
        let err = section(text, "error").unwrap_or("unknown error");
        let reflection = format!("The script failed with `{}`; regenerate the offending lines from the plan.", err.lines().next().unwrap_or(""));
        let source = if rng.random_bool(self.profile.repair_rate) {
            render_program(&attrs, None)
        } else {
            inject_defect(&render_program(&attrs, None), &attrs, rng)
        };
        format!("{}\n{}", wrap("reflection", &reflection), wrap("code", &source))
    }
}

impl Responder for SimulatedDeveloper {
    fn respond(&self, messages: &[Message], ctx: &CallContext) -> String {
        let mut rng = seed_rng(ctx);
        let text = user_text(messages);
        match ctx.stage {
            Stage::Planning if text.contains("<mode>refine</mode>") => self.refine(&text, &mut rng),
            // a reformat request answers the original request again
            Stage::Planning => {
                let reformat = text.contains("<mode>reformat</mode>");
                self.fresh_plan(&text, reformat || !rng.random_bool(self.profile.malformed_rate), &mut rng)
            }
            Stage::Coding => self.write_code(&text, &mut rng),
            Stage::Debugging => self.repair(&text, &mut rng),
        }
    }
}
