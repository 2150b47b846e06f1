//! Benchmark construction: verified Level 1-3 tasks, and graded Level 4-5
//! tasks derived from a measured maximum speedup.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::describe_request;
use crate::eval::{EvalError, Evaluator};
use crate::jsonl::JsonlWriter;
use crate::metrics::{mean, quality_loss, speedup, SampleMeasurements};
use crate::program::CandidateProgram;
use crate::render::render_program;
use crate::sim::{max_feasible_speedup, BackendError, Coord, ExecutionBackend, GridPoint, RunStatus, SearchSpace, SimLandscape, LOSS_EPS};
use crate::task::{
    save_task, AccelConfig, Difficulty, KeyAttributes, Manifest, ManifestEntry, Target, TaskError, TaskSpec,
    FEATURE_REUSE, GATED_ACTIVATION, HALF_PRECISION, TOKEN_MERGING,
};

#[derive(Debug, Error)]
pub enum BuilderError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("task {task_id}: ground truth does not pass its own evaluation")]
    VerificationFailure { task_id: String },
    #[error("no configuration satisfies the quality bound, not even the baseline")]
    NoFeasibleConfig,
    #[error("baseline does not run: {0}")]
    BaselineFailed(String),
    #[error("pipeline {0} is not in the landscape")]
    UnknownPipeline(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("emission log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub iterations: usize,
    pub validation_samples: usize,
    /// Relative quality degradation bound.
    pub sigma: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { iterations: 50, validation_samples: 36, sigma: 0.05, delta1: 0.8, delta2: 1.2, seed: 0 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), BuilderError> {
        let bad = |m: &str| Err(BuilderError::Config(m.into()));
        if !(self.delta1 < 1.0 && 1.0 < self.delta2) {
            return bad("need delta1 < 1 < delta2");
        }
        if self.iterations == 0 || self.validation_samples == 0 {
            return bad("iterations and validation_samples must be positive");
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return bad("sigma must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: KeyAttributes,
    pub u_found: f64,
    pub loss: f64,
    /// Proposals actually measured.
    pub evaluations: usize,
    pub baseline_latency: f64,
}

struct Measurer<'a> {
    backend: &'a dyn ExecutionBackend,
    prompts: &'a [String],
    cfg: &'a SearchConfig,
    base_t: Vec<f64>,
    base_q: Vec<f64>,
}

impl Measurer<'_> {
    fn measure(&self, attrs: &KeyAttributes) -> Result<Option<(f64, f64)>, BuilderError> {
        let out = self.backend.run(&render_program(attrs, None), self.prompts, self.cfg.validation_samples, self.cfg.seed)?;
        if !out.is_ok() {
            return Ok(None);
        }
        let m = SampleMeasurements {
            quality_base: self.base_q.clone(),
            quality_acc: out.quality,
            time_base: self.base_t.clone(),
            time_acc: out.latency,
        };
        match (speedup(&m), quality_loss(&m)) {
            (Ok(u), Ok(l)) => Ok(Some((u, l))),
            _ => Ok(None),
        }
    }
}

/// Ordering used by the climber: feasible beats infeasible, then higher
/// speedup; among infeasible points lower loss wins.
fn score(u: f64, l: f64, sigma: f64) -> (bool, f64) {
    if l <= sigma + LOSS_EPS { (true, u) } else { (false, -l) }
}

/// Random-restart hill climbing over the acceleration grid with steps held
/// at the baseline's value. Each distinct point is measured once.
pub fn search_max_speedup(
    baseline: &KeyAttributes,
    cfg: &SearchConfig,
    backend: &dyn ExecutionBackend,
    prompts: &[String],
) -> Result<SearchResult, BuilderError> {
    search_in_space(baseline, &SearchSpace::fixed_steps(baseline.num_inference_steps), cfg, backend, prompts)
}

pub fn search_in_space(
    baseline: &KeyAttributes,
    space: &SearchSpace,
    cfg: &SearchConfig,
    backend: &dyn ExecutionBackend,
    prompts: &[String],
) -> Result<SearchResult, BuilderError> {
    cfg.validate()?;
    let base = baseline.without_acceleration();
    let out = backend.run(&render_program(&base, None), prompts, cfg.validation_samples, cfg.seed)?;
    if let RunStatus::RuntimeFailure { message } = out.status {
        return Err(BuilderError::BaselineFailed(message));
    }
    let m = Measurer { backend, prompts, cfg, base_t: out.latency.clone(), base_q: out.quality.clone() };
    let baseline_latency = mean(&out.latency);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashMap<Coord, (bool, f64, f64, f64)> = HashMap::new();
    let mut unvisited: Vec<Coord> = space.coords();

    let attrs_at = |c: &Coord| {
        let p: GridPoint = space.point(c);
        KeyAttributes { num_inference_steps: p.steps, ..base.with_accel(&p.accel) }
    };
    let eval = |c: Coord, seen: &mut HashMap<Coord, (bool, f64, f64, f64)>, unvisited: &mut Vec<Coord>| -> Result<(bool, f64), BuilderError> {
        if let Some(&(f, s, _, _)) = seen.get(&c) {
            return Ok((f, s));
        }
        let (u, l) = m.measure(&attrs_at(&c))?.unwrap_or((0.0, f64::INFINITY));
        let (f, s) = score(u, l, cfg.sigma);
        seen.insert(c, (f, s, u, l));
        if let Some(i) = unvisited.iter().position(|x| *x == c) {
            unvisited.swap_remove(i);
        }
        Ok((f, s))
    };

    let start = space.identity();
    let mut current = start;
    let mut cur_score = eval(start, &mut seen, &mut unvisited)?;
    while seen.len() < cfg.iterations && !unvisited.is_empty() {
        let mut nbrs: Vec<Coord> = space.neighbors(&current).into_iter().filter(|n| !seen.contains_key(n)).collect();
        let mut moved = false;
        while !nbrs.is_empty() && seen.len() < cfg.iterations {
            let i = rand::Rng::random_range(&mut rng, 0..nbrs.len());
            let n = nbrs.swap_remove(i);
            let s = eval(n, &mut seen, &mut unvisited)?;
            if s > cur_score {
                current = n;
                cur_score = s;
                moved = true;
                break;
            }
        }
        if !moved && seen.len() < cfg.iterations {
            // local optimum: restart from a random unmeasured point
            let Some(&r) = unvisited.choose(&mut rng) else { break };
            cur_score = eval(r, &mut seen, &mut unvisited)?;
            current = r;
        }
    }

    let best = seen
        .iter()
        .filter(|(_, v)| v.0)
        .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2).then_with(|| b.0.cmp(a.0)))
        .map(|(c, v)| (*c, v.2, v.3));
    let Some((c, u, l)) = best else {
        return Err(BuilderError::NoFeasibleConfig);
    };
    Ok(SearchResult { best: attrs_at(&c), u_found: u, loss: l, evaluations: seen.len(), baseline_latency })
}

/// Brute-force evidence that a speedup target is reachable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub u_star: f64,
    pub witness: AccelConfig,
    pub witness_loss: f64,
    pub feasible: bool,
}

pub fn certify(landscape: &SimLandscape, baseline: &KeyAttributes, sigma: f64, u_req: f64) -> Result<Certificate, BuilderError> {
    let profile = landscape
        .profile(&baseline.pipeline_class)
        .ok_or_else(|| BuilderError::UnknownPipeline(baseline.pipeline_class.clone()))?;
    let f = max_feasible_speedup(landscape, profile, &SearchSpace::fixed_steps(baseline.num_inference_steps), sigma);
    Ok(Certificate { u_star: f.speedup, witness: f.point.accel, witness_loss: f.loss, feasible: u_req <= f.speedup * (1.0 + 1e-12) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub task_id: String,
    pub level: u8,
    pub difficulty: Difficulty,
    pub u_found: f64,
    pub u_req: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    pub possibly_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub tasks: Vec<TaskSpec>,
    pub log: Vec<EmissionRecord>,
}

fn task_from(
    id: String,
    level: u8,
    gt: KeyAttributes,
    target: Target,
    difficulty: Option<Difficulty>,
    sigma: f64,
    hardware_tag: &str,
) -> TaskSpec {
    let (speedup_requirement, latency_bound) = match target {
        Target::None => (None, None),
        Target::Speedup { required } => (Some(required), None),
        Target::Latency { bound } => (None, Some(bound)),
    };
    TaskSpec {
        task_id: id,
        level,
        prompt: describe_request(&gt, &target, sigma),
        hardware_tag: hardware_tag.to_string(),
        quality_threshold: sigma,
        speedup_requirement,
        latency_bound,
        difficulty,
        reference_code: render_program(&gt, None),
        ground_truth: gt,
    }
}

/// Easy, medium and hard Level-4 tasks from `u_found`, plus the Level-5
/// variants with tau_max = baseline latency / U_req. With a landscape,
/// every record carries a brute-force certificate.
pub fn emit_graded_tasks(
    id_stem: &str,
    baseline: &KeyAttributes,
    result: &SearchResult,
    cfg: &SearchConfig,
    hardware_tag: &str,
    landscape: Option<&SimLandscape>,
) -> Result<Emission, BuilderError> {
    cfg.validate()?;
    let gt = baseline.without_acceleration();
    let mut tasks = Vec::new();
    let mut log = Vec::new();
    let grades = [
        (Difficulty::Easy, cfg.delta1),
        (Difficulty::Medium, 1.0),
        (Difficulty::Hard, cfg.delta2),
    ];
    for level in [4u8, 5] {
        for (d, scale) in grades {
            let u_req = scale * result.u_found;
            let (target, latency_bound) = if level == 4 {
                (Target::Speedup { required: u_req }, None)
            } else {
                let tau = result.baseline_latency / u_req;
                (Target::Latency { bound: tau }, Some(tau))
            };
            let id = format!("L{level}-{id_stem}-{}", d.as_str());
            let certificate = landscape.map(|l| certify(l, &gt, cfg.sigma, u_req)).transpose()?;
            log.push(EmissionRecord {
                task_id: id.clone(),
                level,
                difficulty: d,
                u_found: result.u_found,
                u_req,
                latency_bound,
                u_star: certificate.as_ref().map(|c| c.u_star),
                certificate,
                possibly_infeasible: d == Difficulty::Hard,
            });
            tasks.push(task_from(id, level, gt.clone(), target, Some(d), cfg.sigma, hardware_tag));
        }
    }
    Ok(Emission { tasks, log })
}

/// `count` distinct baselines: every landscape pipeline at 15, 20, ..., 60
/// steps, pipelines varying fastest. Stops early when the grid runs out.
pub fn varied_baselines(landscape: &SimLandscape, count: usize) -> Vec<KeyAttributes> {
    let mut out = Vec::with_capacity(count);
    for steps in (15..=60).step_by(5) {
        for p in &landscape.pipelines {
            if out.len() == count {
                return out;
            }
            let mut a = p.default_attributes();
            a.num_inference_steps = steps;
            out.push(a);
        }
    }
    out
}

/// Level-4 tasks whose speedup requirement is `scale` times the exact
/// optimum at the baseline's step count, each with its certificate.
pub fn certified_speedup_tasks(
    landscape: &SimLandscape,
    bases: &[KeyAttributes],
    scale: f64,
    sigma: f64,
    hardware_tag: &str,
) -> Result<Vec<(TaskSpec, Certificate)>, BuilderError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(BuilderError::Config(format!("scale must be positive, got {scale}")));
    }
    let mut out = Vec::with_capacity(bases.len());
    for (i, base) in bases.iter().enumerate() {
        let gt = base.without_acceleration();
        let probe = certify(landscape, &gt, sigma, f64::INFINITY)?;
        let u_req = scale * probe.u_star;
        let cert = Certificate { feasible: u_req <= probe.u_star * (1.0 + 1e-12), ..probe };
        let id = format!("L4-{}-n{}-{i}", stem(&gt.pipeline_class), gt.num_inference_steps);
        let task = task_from(id, 4, gt, Target::Speedup { required: u_req }, Some(Difficulty::Easy), sigma, hardware_tag);
        out.push((task, cert));
    }
    Ok(out)
}

fn stem(pipeline: &str) -> String {
    pipeline.trim_end_matches("Pipeline").to_ascii_lowercase()
}

/// Level 1: bare pipelines. Level 2: each of the four methods alone on the
/// first two pipelines. Level 3: a faster sampler with feature reuse, and
/// half precision with token merging, on the first pipeline.
pub fn baseline_candidates(bases: &[KeyAttributes]) -> Vec<TaskSpec> {
    let mut out = Vec::new();
    let sigma = crate::task::DEFAULT_QUALITY_THRESHOLD;
    for b in bases.iter().take(2) {
        out.push(task_from(format!("L1-{}", stem(&b.pipeline_class)), 1, b.without_acceleration(), Target::None, None, sigma, "sim"));
    }
    for b in bases.iter().take(2) {
        let n = b.num_inference_steps;
        let singles = [
            (TOKEN_MERGING, AccelConfig { merge_ratio: Some(0.5), ..Default::default() }),
            (FEATURE_REUSE, AccelConfig { cache_interval: Some(3), ..Default::default() }),
            (GATED_ACTIVATION, AccelConfig { gate_step: Some((n / 2).max(1)), ..Default::default() }),
            (HALF_PRECISION, AccelConfig { half_precision: true, ..Default::default() }),
        ];
        for (name, accel) in singles {
            let id = format!("L2-{}-{}", stem(&b.pipeline_class), name.replace('_', ""));
            out.push(task_from(id, 2, b.with_accel(&accel), Target::None, None, sigma, "sim"));
        }
    }
    if let Some(b) = bases.first() {
        let fast = KeyAttributes {
            scheduler_class: "DPMSolverMultistepScheduler".into(),
            num_inference_steps: 25,
            ..b.with_accel(&AccelConfig { cache_interval: Some(3), ..Default::default() })
        };
        out.push(task_from(format!("L3-{}-fastsampler-reuse", stem(&b.pipeline_class)), 3, fast, Target::None, None, sigma, "sim"));
        let fp = b.with_accel(&AccelConfig { half_precision: true, merge_ratio: Some(0.3), ..Default::default() });
        out.push(task_from(format!("L3-{}-fp16-tome", stem(&b.pipeline_class)), 3, fp, Target::None, None, sigma, "sim"));
    }
    out
}

/// Keeps only tasks whose ground-truth realization passes evaluation.
pub fn build_baseline_tasks(bases: &[KeyAttributes], evaluator: &Evaluator) -> Result<Vec<TaskSpec>, BuilderError> {
    let mut out = Vec::new();
    for t in baseline_candidates(bases) {
        let cand = CandidateProgram::new(format!("{}/reference", t.task_id), t.reference_code.clone());
        if !evaluator.evaluate(&cand, &t)?.passed {
            return Err(BuilderError::VerificationFailure { task_id: t.task_id });
        }
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub tasks: Vec<TaskSpec>,
    pub log: Vec<EmissionRecord>,
    pub search: SearchResult,
}

/// The standard 18-task corpus: 12 verified Level 1-3 tasks and the graded
/// Level 4-5 tasks of the first pipeline in `pipelines`.
pub fn build_corpus(
    landscape: &SimLandscape,
    pipelines: &[&str],
    cfg: &SearchConfig,
    evaluator: &Evaluator,
    prompts: &[String],
) -> Result<Corpus, BuilderError> {
    let bases = pipelines
        .iter()
        .map(|p| {
            landscape
                .profile(p)
                .map(|pr| pr.default_attributes())
                .ok_or_else(|| BuilderError::UnknownPipeline(p.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut tasks = build_baseline_tasks(&bases, evaluator)?;
    let base = bases.first().ok_or_else(|| BuilderError::Config("no pipelines given".into()))?;
    let search = search_max_speedup(base, cfg, evaluator.backend().as_ref(), prompts)?;
    let em = emit_graded_tasks(&stem(&base.pipeline_class), base, &search, cfg, "sim", Some(landscape))?;
    tasks.extend(em.tasks);
    Ok(Corpus { tasks, log: em.log, search })
}

/// Writes `tasks/<id>.toml`, `manifest.toml` and `emission_log.jsonl`.
pub fn write_corpus(corpus: &Corpus, dir: &Path, name: &str) -> Result<PathBuf, BuilderError> {
    let mut manifest = Manifest::new(name);
    let mut ids = BTreeSet::new();
    for t in &corpus.tasks {
        if !ids.insert(t.task_id.clone()) {
            return Err(BuilderError::Config(format!("duplicate task id {}", t.task_id)));
        }
        let rel = PathBuf::from("tasks").join(format!("{}.toml", t.task_id));
        save_task(t, &dir.join(&rel))?;
        manifest.tasks.push(ManifestEntry { path: rel, level: t.level });
    }
    let path = dir.join("manifest.toml");
    manifest.save(&path)?;
    let log = JsonlWriter::create(&dir.join("emission_log.jsonl"))?;
    for r in &corpus.log {
        log.append(r)?;
    }
    Ok(path)
}
