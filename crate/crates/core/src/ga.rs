//! Fitness-proportional plan selection over generations.
//!
//! Each generation holds `population` episodes: `offspring` refinements of
//! parents sampled from the previous generation (plus the best record so
//! far), and fresh plans for the remaining slots. The loop stops after the
//! first generation that contains a passing candidate.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Agents, EpisodeOutcome, FeedbackReport, Origin, PlanGenome, PlanMode};
use crate::eval::{EvalError, EvaluationReport, Evaluator};
use crate::jsonl::{read_jsonl, JsonlWriter};
use crate::llm::{hash_label, Session, Stage};
use crate::metrics::{efficiency_ratio, failure_fitness, fitness, FitnessWeights};
use crate::program::CandidateProgram;
use crate::sim::ExecutionBackend;
use crate::task::TaskSpec;

/// Added to every shifted fitness so the minimum keeps a nonzero share.
pub const ETA: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("cannot select {m} offspring from {available} records")]
    InvalidM { m: usize, available: usize },
    #[error("fitness list is empty")]
    Empty,
    #[error("fitness {0} is not finite")]
    NonFinite(f64),
    #[error("invalid GA config: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("run database: {0}")]
    Database(#[from] std::io::Error),
}

/// p_i = (f_i - min f + eta) / sum_j (f_j - min f + eta).
pub fn normalize_fitness(f: &[f64]) -> Result<Vec<f64>, GaError> {
    if f.is_empty() {
        return Err(GaError::Empty);
    }
    if let Some(&bad) = f.iter().find(|v| !v.is_finite()) {
        return Err(GaError::NonFinite(bad));
    }
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = f.iter().map(|v| v - min + ETA).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.into_iter().map(|s| s / total).collect())
}

/// Draws `m` distinct indices with probability proportional to `weights`,
/// each draw renormalizing over what is left. The result is ordered by
/// `fitness` descending, ties by index.
pub fn select_offspring(
    fitness: &[f64],
    weights: &[f64],
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, GaError> {
    if m > weights.len() || fitness.len() != weights.len() {
        return Err(GaError::InvalidM { m, available: weights.len() });
    }
    let mut left: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = left.iter().map(|&i| weights[i]).sum();
        let mut x = rng.random::<f64>() * total;
        let mut pick = left.len() - 1;
        for (j, &i) in left.iter().enumerate() {
            if x < weights[i] {
                pick = j;
                break;
            }
            x -= weights[i];
        }
        out.push(left.remove(pick));
    }
    out.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    /// `false`: one plan, one episode, one evaluation.
    pub enabled: bool,
    pub population: usize,
    pub offspring: usize,
    pub generations: u32,
    pub weights: FitnessWeights,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { enabled: true, population: 7, offspring: 4, generations: 4, weights: FitnessWeights::default() }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        if !self.enabled {
            return Ok(());
        }
        if self.population == 0 || self.generations == 0 {
            return Err(GaError::Config("population and generations must be positive".into()));
        }
        if self.offspring > self.population {
            return Err(GaError::Config(format!(
                "offspring {} exceeds population {}",
                self.offspring, self.population
            )));
        }
        Ok(())
    }

    /// Upper bound on episodes per task.
    pub fn max_episodes(&self) -> usize {
        if self.enabled { self.population * self.generations as usize } else { 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub succeeded: bool,
    pub cycles: u32,
    pub repairs: u32,
    /// Coding plus debugging calls.
    pub calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

/// One row of the run database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub candidate_id: String,
    pub task_id: String,
    pub generation: u32,
    pub slot: usize,
    pub plan: PlanGenome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub episode: EpisodeStats,
    /// `None` for episodes that never produced a runnable script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<f64>,
    /// Selection probability within its generation; 0 when not evaluated.
    pub probability: f64,
}

impl FitnessRecord {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed)
    }
}

/// Append-only JSONL log of fitness records.
pub struct RunDatabase {
    writer: JsonlWriter<FitnessRecord>,
}

impl RunDatabase {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self { writer: JsonlWriter::create(path)? })
    }

    pub fn append(&self, r: &FitnessRecord) -> std::io::Result<()> {
        self.writer.append(r)
    }

    pub fn read(path: &Path) -> std::io::Result<Vec<FitnessRecord>> {
        read_jsonl(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStatus {
    Passed,
    /// No passing candidate within the generation limit; `best` is the
    /// fittest evaluated one, if any.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub status: LoopStatus,
    pub best: Option<FitnessRecord>,
    pub generations_run: u32,
    pub episodes: usize,
    pub records: Vec<FitnessRecord>,
}

/// Everything one task's loop needs.
pub struct TaskRun<'a> {
    pub task: &'a TaskSpec,
    pub agents: &'a Agents,
    pub session: &'a Session,
    pub evaluator: &'a Evaluator,
    pub backend: &'a dyn ExecutionBackend,
    pub seed: u64,
    pub database: Option<&'a RunDatabase>,
}

pub fn candidate_id(task: &str, generation: u32, slot: usize) -> String {
    format!("{task}/g{generation}/s{slot}")
}

fn record_fitness(report: &EvaluationReport, w: &FitnessWeights) -> f64 {
    match report.relative() {
        Some(s) => fitness(s.quality_loss, efficiency_ratio(&s.target, s.speedup, s.latency), w),
        None => failure_fitness(w),
    }
}

impl TaskRun<'_> {
    fn episode_seed(&self, generation: u32, slot: usize) -> u64 {
        hash_label(&[&self.seed.to_string(), &self.task.task_id, &generation.to_string(), &slot.to_string()])
    }

    /// Episode plus evaluation for one plan.
    fn realize(&self, id: &str, plan: PlanGenome, generation: u32, slot: usize, w: &FitnessWeights) -> Result<FitnessRecord, GaError> {
        let seed = self.episode_seed(generation, slot);
        let outcome = self.agents.run_episode(self.session, id, &plan, self.backend, seed)?;
        let calls = self.session.episode_calls(id, &[Stage::Coding, Stage::Debugging]);
        let (stats, source) = match outcome {
            EpisodeOutcome::Success { source, cycles, repairs } => {
                (EpisodeStats { succeeded: true, cycles, repairs, calls, last_error: None }, Some(source))
            }
            EpisodeOutcome::Failure { cycles, repairs, last_error, .. } => {
                (EpisodeStats { succeeded: false, cycles, repairs, calls, last_error: Some(last_error) }, None)
            }
        };
        let report = match &source {
            Some(src) => {
                let cand = CandidateProgram::new(id, src.clone()).with_plan(plan.clone());
                Some(self.evaluator.evaluate(&cand, self.task)?)
            }
            None => None,
        };
        let fitness = report.as_ref().map(|r| record_fitness(r, w));
        Ok(FitnessRecord {
            candidate_id: id.to_string(),
            task_id: self.task.task_id.clone(),
            generation,
            slot,
            plan,
            source,
            episode: stats,
            report,
            fitness,
            probability: 0.0,
        })
    }

    fn fresh(&self, generation: u32, slot: usize, w: &FitnessWeights) -> Result<FitnessRecord, GaError> {
        let id = candidate_id(&self.task.task_id, generation, slot);
        let plan = self.agents.plan(self.session, &id, &self.task.prompt, PlanMode::Optimization, generation)?;
        self.realize(&id, plan, generation, slot, w)
    }

    fn refined(&self, parent: &FitnessRecord, generation: u32, slot: usize, w: &FitnessWeights) -> Result<FitnessRecord, GaError> {
        let id = candidate_id(&self.task.task_id, generation, slot);
        let report = parent.report.as_ref().expect("pool holds evaluated records only");
        let fb = FeedbackReport::from_report(report, self.task);
        let plan = self.agents.refine_plan(
            self.session,
            &id,
            &self.task.prompt,
            &parent.candidate_id,
            &parent.plan,
            &fb,
            generation,
        )?;
        self.realize(&id, plan, generation, slot, w)
    }
}

fn better(a: &FitnessRecord, b: &FitnessRecord) -> bool {
    // passing beats failing, then fitness
    (a.passed(), a.fitness.unwrap_or(f64::NEG_INFINITY)) > (b.passed(), b.fitness.unwrap_or(f64::NEG_INFINITY))
}

/// Runs the loop. With `cfg.enabled == false` a single fresh plan is
/// realized and returned.
pub fn run_generation_loop(run: &TaskRun<'_>, cfg: &GaConfig) -> Result<LoopOutcome, GaError> {
    cfg.validate()?;
    let w = &cfg.weights;
    let (population, generations) = if cfg.enabled { (cfg.population, cfg.generations) } else { (1, 1) };
    let mut records: Vec<FitnessRecord> = Vec::new();
    let mut best: Option<FitnessRecord> = None;
    let mut pool: Vec<FitnessRecord> = Vec::new();
    let mut generations_run = 0;

    for g in 0..generations {
        generations_run = g + 1;
        let mut parents: Vec<FitnessRecord> = Vec::new();
        if cfg.enabled && g > 0 && cfg.offspring > 0 && !pool.is_empty() {
            let f: Vec<f64> = pool.iter().map(|r| r.fitness.unwrap_or(failure_fitness(w))).collect();
            let p = normalize_fitness(&f)?;
            let mut rng = ChaCha8Rng::seed_from_u64(hash_label(&[&run.seed.to_string(), &run.task.task_id, "select", &g.to_string()]));
            let k = cfg.offspring.min(pool.len());
            let picked = select_offspring(&f, &p, k, &mut rng)?;
            // fewer parents than slots: cycle through them
            parents = (0..cfg.offspring).map(|i| pool[picked[i % k]].clone()).collect();
        }
        let mut gen_records = Vec::with_capacity(population);
        for slot in 0..population {
            let r = match parents.get(slot) {
                Some(parent) => run.refined(parent, g, slot, w)?,
                None => run.fresh(g, slot, w)?,
            };
            gen_records.push(r);
        }

        // probabilities over the evaluated records of this generation
        let evaluated: Vec<usize> = (0..gen_records.len()).filter(|&i| gen_records[i].fitness.is_some()).collect();
        if !evaluated.is_empty() {
            let f: Vec<f64> = evaluated.iter().map(|&i| gen_records[i].fitness.unwrap()).collect();
            for (&i, p) in evaluated.iter().zip(normalize_fitness(&f)?) {
                gen_records[i].probability = p;
            }
        }
        if let Some(db) = run.database {
            for r in &gen_records {
                db.append(r)?;
            }
        }
        for r in &gen_records {
            if r.fitness.is_some() && best.as_ref().is_none_or(|b| better(r, b)) {
                best = Some(r.clone());
            }
        }
        pool = gen_records.iter().filter(|r| r.fitness.is_some()).cloned().collect();
        if let Some(b) = &best {
            if !pool.iter().any(|r| r.candidate_id == b.candidate_id) {
                pool.push(b.clone());
            }
        }
        records.extend(gen_records);
        if best.as_ref().is_some_and(FitnessRecord::passed) {
            return Ok(LoopOutcome { status: LoopStatus::Passed, best, generations_run, episodes: records.len(), records });
        }
    }
    Ok(LoopOutcome { status: LoopStatus::BestEffort, best, generations_run, episodes: records.len(), records })
}

/// Lineage check over a finished run: refined plans name a parent from an
/// earlier generation, fresh ones name none.
pub fn lineage_is_valid(records: &[FitnessRecord]) -> bool {
    let mut seen: BTreeSet<(&str, u32)> = BTreeSet::new();
    for r in records {
        seen.insert((&r.candidate_id, r.generation));
    }
    records.iter().all(|r| {
        r.plan.lineage_is_consistent()
            && r.plan.lineage.generation == r.generation
            && match (&r.plan.origin, &r.plan.lineage.parent) {
                (Origin::Fresh, _) => true,
                (Origin::Refined, Some(p)) => seen.iter().any(|(id, g)| id == p && *g < r.generation),
                (Origin::Refined, None) => false,
            }
    })
}
