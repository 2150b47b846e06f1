//! Runs tasks end to end and writes the run directory.
//!
//! Layout of an output directory:
//!
//! ```text
//! candidates/<task>.py     final candidate per task
//! reports/<task>.json      its evaluation report
//! database/<task>.jsonl    fitness records (optimization tasks)
//! audit/<task>.jsonl       every gateway exchange of the task
//! summary.json             suite summary plus per-task results
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    AgentError, Agents, DeveloperProfile, EpisodeBudget, EpisodeOutcome, KnowledgeBase, PlanMode, SimulatedDeveloper,
};
use crate::eval::{summarize, EvalConfig, EvalError, EvaluationReport, Evaluator, SuiteSummary};
use crate::ga::{run_generation_loop, GaConfig, GaError, LoopStatus, RunDatabase, TaskRun};
use crate::jsonl::JsonlWriter;
use crate::llm::{ChatExchange, CompletionParams, Gateway, MockTransport, RetryPolicy, Session, Stage};
use crate::program::CandidateProgram;
use crate::sim::ExecutionBackend;
use crate::task::TaskSpec;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ga: GaConfig,
    pub episode: EpisodeBudget,
    pub knowledge_base: bool,
    /// Extra plans allowed at Levels 1-3 after an episode fails.
    pub replan_cap: u32,
    pub eval: EvalConfig,
    /// Gateway calls allowed per task; `None` for no limit.
    pub call_budget: Option<u64>,
    /// Worker threads across tasks; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ga: GaConfig::default(),
            episode: EpisodeBudget::default(),
            knowledge_base: true,
            replan_cap: 3,
            eval: EvalConfig::default(),
            call_budget: None,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.ga.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.episode.t_code == 0 || self.episode.t_debug == 0 {
            return Err(RunError::Config("t_code and t_debug must be positive".into()));
        }
        if self.eval.few_shot_n == 0 {
            return Err(RunError::Config("few_shot_n must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(RunError::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Passed,
    Failed,
    /// Optimization loop ended without a passing candidate.
    BestEffort,
    /// No runnable candidate came out of any episode.
    NoCandidate,
    /// The task could not be run, e.g. its baseline failed to execute.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_fitness: Option<f64>,
    pub passed: bool,
}

/// Best fitness and pass flag per generation, in generation order.
pub fn generation_summaries(records: &[crate::ga::FitnessRecord]) -> Vec<GenerationSummary> {
    let mut by: BTreeMap<u32, GenerationSummary> = BTreeMap::new();
    for r in records {
        let g = by.entry(r.generation).or_insert(GenerationSummary { generation: r.generation, best_fitness: None, passed: false });
        if let Some(f) = r.fitness {
            g.best_fitness = Some(g.best_fitness.map_or(f, |b: f64| b.max(f)));
        }
        g.passed |= r.passed();
    }
    by.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub level: u8,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateProgram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    pub episodes: usize,
    pub generations: u32,
    pub replans: u32,
    /// Gateway calls per stage.
    pub calls: BTreeMap<Stage, u64>,
    /// Largest coding-plus-debugging call count of any single episode.
    pub max_episode_calls: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generation_summary: Vec<GenerationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub exchanges: Vec<ChatExchange>,
    #[serde(skip)]
    pub records: Vec<crate::ga::FitnessRecord>,
}

impl TaskResult {
    fn errored(task: &TaskSpec, e: &RunError) -> Self {
        Self {
            task_id: task.task_id.clone(),
            level: task.level,
            status: TaskStatus::Error,
            candidate: None,
            report: None,
            episodes: 0,
            generations: 0,
            replans: 0,
            calls: BTreeMap::new(),
            max_episode_calls: 0,
            generation_summary: Vec::new(),
            error: Some(e.to_string()),
            exchanges: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn achievement_rate(&self) -> f64 {
        self.report.as_ref().and_then(|r| r.relative()).map_or(0.0, |s| s.achievement_rate)
    }

    pub fn passed(&self) -> bool {
        self.status == TaskStatus::Passed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub suite: SuiteSummary,
    pub tasks: Vec<TaskResult>,
}

/// A gateway answered by the simulated developer, with no retry delays.
pub fn mock_gateway(profile: DeveloperProfile) -> Arc<Gateway> {
    let transport = MockTransport::new(SimulatedDeveloper::new(profile));
    Arc::new(Gateway::new(Arc::new(transport), CompletionParams::default(), RetryPolicy::immediate()))
}

pub struct Orchestrator {
    cfg: RunConfig,
    agents: Agents,
    gateway: Arc<Gateway>,
    backend: Arc<dyn ExecutionBackend>,
    evaluator: Evaluator,
}

fn max_episode_calls(session: &Session) -> u64 {
    let mut per: BTreeMap<String, u64> = BTreeMap::new();
    for x in session.exchanges() {
        if matches!(x.stage, Stage::Coding | Stage::Debugging) {
            *per.entry(x.episode).or_default() += 1;
        }
    }
    per.values().copied().max().unwrap_or(0)
}

impl Orchestrator {
    /// With the GA disabled, population and offspring are reset to 0.
    pub fn new(mut cfg: RunConfig, gateway: Arc<Gateway>, backend: Arc<dyn ExecutionBackend>) -> Result<Self, RunError> {
        cfg.validate()?;
        if !cfg.ga.enabled {
            cfg.ga.population = 0;
            cfg.ga.offspring = 0;
        }
        let kb = if cfg.knowledge_base { KnowledgeBase::builtin() } else { KnowledgeBase::disabled() };
        let agents = Agents::new(kb, cfg.episode);
        let evaluator = Evaluator::new(backend.clone(), cfg.eval.clone());
        Ok(Self { cfg, agents, gateway, backend, evaluator })
    }

    /// Replaces the agents, e.g. to use a custom knowledge base or prompts.
    pub fn with_agents(mut self, agents: Agents) -> Self {
        self.agents = agents;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    fn session(&self, task: &TaskSpec) -> Session {
        self.gateway.session(task.task_id.clone(), self.cfg.seed, self.cfg.call_budget)
    }

    /// Plans, codes, debugs and evaluates one task. `database` receives the
    /// fitness records of optimization tasks.
    pub fn run_task(&self, task: &TaskSpec, database: Option<&RunDatabase>) -> Result<TaskResult, RunError> {
        let session = self.session(task);
        let mut result = if task.is_optimization() {
            self.run_optimization(task, &session, database)?
        } else {
            self.run_generation(task, &session)?
        };
        result.calls = session.per_stage();
        result.max_episode_calls = max_episode_calls(&session);
        result.exchanges = session.exchanges();
        Ok(result)
    }

    fn run_generation(&self, task: &TaskSpec, session: &Session) -> Result<TaskResult, RunError> {
        let mut result = TaskResult {
            task_id: task.task_id.clone(),
            level: task.level,
            status: TaskStatus::NoCandidate,
            candidate: None,
            report: None,
            episodes: 0,
            generations: 0,
            replans: 0,
            calls: BTreeMap::new(),
            max_episode_calls: 0,
            generation_summary: Vec::new(),
            error: None,
            exchanges: Vec::new(),
            records: Vec::new(),
        };
        for attempt in 0..=self.cfg.replan_cap {
            result.replans = attempt;
            let episode = format!("{}/r{attempt}", task.task_id);
            let plan = match self.agents.plan(session, &episode, &task.prompt, PlanMode::Generation, 0) {
                Ok(p) => p,
                Err(AgentError::UnparseablePlan { .. }) => continue,
                Err(AgentError::Gateway(crate::llm::GatewayError::BudgetExhausted { .. })) => break,
                Err(e) => return Err(e.into()),
            };
            let seed = crate::llm::hash_label(&[&self.cfg.seed.to_string(), &episode]);
            result.episodes += 1;
            match self.agents.run_episode(session, &episode, &plan, self.backend.as_ref(), seed)? {
                EpisodeOutcome::Success { source, .. } => {
                    let cand = CandidateProgram::new(episode, source).with_plan(plan);
                    let report = self.evaluator.evaluate(&cand, task)?;
                    result.status = if report.passed { TaskStatus::Passed } else { TaskStatus::Failed };
                    result.candidate = Some(cand);
                    result.report = Some(report);
                    return Ok(result);
                }
                EpisodeOutcome::Failure { replan: true, .. } => continue,
                EpisodeOutcome::Failure { .. } => break,
            }
        }
        Ok(result)
    }

    fn run_optimization(&self, task: &TaskSpec, session: &Session, database: Option<&RunDatabase>) -> Result<TaskResult, RunError> {
        let run = TaskRun {
            task,
            agents: &self.agents,
            session,
            evaluator: &self.evaluator,
            backend: self.backend.as_ref(),
            seed: self.cfg.seed,
            database,
        };
        let out = run_generation_loop(&run, &self.cfg.ga)?;
        let status = match (&out.best, out.status) {
            (_, LoopStatus::Passed) => TaskStatus::Passed,
            (Some(_), LoopStatus::BestEffort) => TaskStatus::BestEffort,
            (None, LoopStatus::BestEffort) => TaskStatus::NoCandidate,
        };
        let candidate = out.best.as_ref().and_then(|b| {
            b.source
                .as_ref()
                .map(|s| CandidateProgram::new(b.candidate_id.clone(), s.clone()).with_plan(b.plan.clone()))
        });
        Ok(TaskResult {
            task_id: task.task_id.clone(),
            level: task.level,
            status,
            candidate,
            report: out.best.as_ref().and_then(|b| b.report.clone()),
            episodes: out.episodes,
            generations: out.generations_run,
            replans: 0,
            calls: BTreeMap::new(),
            max_episode_calls: 0,
            generation_summary: generation_summaries(&out.records),
            error: None,
            exchanges: Vec::new(),
            records: out.records,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, RunError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.cfg.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| RunError::Config(e.to_string()))
    }

    /// Runs every task (in parallel across tasks) and, with `out`, writes
    /// the run directory. Results keep the input order. Per-task failures
    /// become `TaskStatus::Error` entries; only output errors abort.
    pub fn run_tasks(&self, tasks: &[TaskSpec], out: Option<&Path>) -> Result<RunSummary, RunError> {
        let dirs = out.map(OutputDirs::create).transpose()?;
        let results: Vec<Result<TaskResult, RunError>> = self.pool()?.install(|| {
            tasks
                .par_iter()
                .map(|t| {
                    let db = match &dirs {
                        Some(d) if t.is_optimization() => Some(RunDatabase::create(&d.database.join(format!("{}.jsonl", t.task_id)))?),
                        _ => None,
                    };
                    let r = self.run_task(t, db.as_ref()).unwrap_or_else(|e| {
                        log::warn!("{}: {e}", t.task_id);
                        TaskResult::errored(t, &e)
                    });
                    if let Some(d) = &dirs {
                        d.write_task(&r)?;
                    }
                    Ok(r)
                })
                .collect()
        });
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let reports: BTreeMap<String, EvaluationReport> = results
            .iter()
            .filter_map(|r| r.report.clone().map(|rep| (r.task_id.clone(), rep)))
            .collect();
        let summary = RunSummary { config: self.cfg.clone(), suite: summarize(tasks, &reports), tasks: results };
        if let Some(d) = &dirs {
            d.write_summary(&summary)?;
        }
        Ok(summary)
    }
}

/// Paths of a run directory.
pub struct OutputDirs {
    pub root: PathBuf,
    pub candidates: PathBuf,
    pub reports: PathBuf,
    pub database: PathBuf,
    pub audit: PathBuf,
}

impl OutputDirs {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        let d = Self {
            root: root.to_path_buf(),
            candidates: root.join("candidates"),
            reports: root.join("reports"),
            database: root.join("database"),
            audit: root.join("audit"),
        };
        for p in [&d.candidates, &d.reports, &d.database, &d.audit] {
            fs::create_dir_all(p)?;
        }
        Ok(d)
    }

    fn write_task(&self, r: &TaskResult) -> std::io::Result<()> {
        if let Some(c) = &r.candidate {
            fs::write(self.candidates.join(format!("{}.py", r.task_id)), &c.source)?;
        }
        if let Some(rep) = &r.report {
            fs::write(self.reports.join(format!("{}.json", r.task_id)), to_json(rep))?;
        }
        let audit = JsonlWriter::create(&self.audit.join(format!("{}.jsonl", r.task_id)))?;
        for x in &r.exchanges {
            audit.append(x)?;
        }
        Ok(())
    }

    fn write_summary(&self, s: &RunSummary) -> std::io::Result<()> {
        fs::write(self.root.join("summary.json"), to_json(s))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("run artifacts serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub population: usize,
    pub generations: u32,
    pub mean_achievement: f64,
    pub pass_rate: f64,
}

/// Runs `tasks` once per `(population, generations)` pair with everything
/// else from `base`. Offspring is capped at the population size.
pub fn sweep(
    base: &RunConfig,
    gateway: Arc<Gateway>,
    backend: Arc<dyn ExecutionBackend>,
    tasks: &[TaskSpec],
    populations: &[usize],
    generations: &[u32],
) -> Result<Vec<SweepCell>, RunError> {
    let mut cells = Vec::new();
    for &p in populations {
        for &g in generations {
            let mut cfg = base.clone();
            cfg.ga.population = p;
            cfg.ga.generations = g;
            cfg.ga.offspring = cfg.ga.offspring.min(p);
            let orch = Orchestrator::new(cfg, gateway.clone(), backend.clone())?;
            let s = orch.run_tasks(tasks, None)?;
            let n = s.tasks.len().max(1) as f64;
            cells.push(SweepCell {
                population: p,
                generations: g,
                mean_achievement: s.tasks.iter().map(TaskResult::achievement_rate).sum::<f64>() / n,
                pass_rate: s.tasks.iter().filter(|t| t.passed()).count() as f64 / n,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::PartialAttributes;
    use crate::agent::config_toml;
    use crate::builder::{baseline_candidates, certified_speedup_tasks};
    use crate::llm::{Responder, SequenceResponder};
    use crate::metrics::ErrorMode;
    use crate::render::render_program;
    use crate::sim::{SimBackend, SimLandscape};
    use crate::task::KeyAttributes;

    fn landscape() -> SimLandscape {
        SimLandscape::builtin()
    }

    fn sd15() -> KeyAttributes {
        landscape().profile("StableDiffusionPipeline").unwrap().default_attributes()
    }

    fn backend() -> Arc<dyn ExecutionBackend> {
        Arc::new(SimBackend::new(landscape()))
    }

    fn gateway<R: Responder + 'static>(r: R) -> Arc<Gateway> {
        Arc::new(Gateway::new(Arc::new(MockTransport::new(r)), CompletionParams::default(), RetryPolicy::immediate()))
    }

    fn identity_plan(a: &KeyAttributes) -> String {
        let cfg = config_toml(&PartialAttributes::from_full(a));
        format!("Keep the pipeline as is.\n<config>\n{cfg}</config>\n<baseline>\n{cfg}</baseline>\n")
    }

    fn level1() -> TaskSpec {
        baseline_candidates(&[sd15()]).into_iter().find(|t| t.level == 1).unwrap()
    }

    #[test]
    fn level1_flawless_mock_takes_two_calls() {
        let orch = Orchestrator::new(RunConfig::default(), mock_gateway(DeveloperProfile::flawless()), backend()).unwrap();
        let r = orch.run_task(&level1(), None).unwrap();
        assert_eq!(r.status, TaskStatus::Passed);
        assert_eq!(r.exchanges.len(), 2);
        assert_eq!(r.calls.get(&Stage::Planning), Some(&1));
        assert_eq!(r.calls.get(&Stage::Coding), Some(&1));
        assert_eq!(r.replans, 0);
    }

    #[test]
    fn replans_are_capped() {
        let mock = SequenceResponder::new()
            .push(Stage::Planning, identity_plan(&sd15()))
            .push(Stage::Coding, "pipe = (")
            .push(Stage::Debugging, "<reflection>x</reflection>\n<code>\npipe = (\n</code>");
        let orch = Orchestrator::new(RunConfig::default(), gateway(mock), backend()).unwrap();
        let r = orch.run_task(&level1(), None).unwrap();
        assert_eq!(r.status, TaskStatus::NoCandidate);
        assert_eq!(r.episodes, 4);
        assert_eq!(r.replans, 3);
        assert_eq!(r.calls.get(&Stage::Planning), Some(&4));
        assert_eq!(r.max_episode_calls, 15);
        assert_eq!(r.exchanges.len(), 4 + 4 * 15);
    }

    #[test]
    fn single_shot_identity_plan_misses_speedup() {
        let l = landscape();
        let (task, _) = certified_speedup_tasks(&l, &[sd15()], 0.8, 0.05, "sim").unwrap().remove(0);
        let mock = SequenceResponder::new()
            .push(Stage::Planning, identity_plan(&sd15()))
            .push(Stage::Coding, render_program(&sd15(), None));
        let mut cfg = RunConfig::default();
        cfg.ga.enabled = false;
        let orch = Orchestrator::new(cfg, gateway(mock), backend()).unwrap();
        assert_eq!((orch.config().ga.population, orch.config().ga.offspring), (0, 0));
        let r = orch.run_task(&task, None).unwrap();
        assert_eq!(r.status, TaskStatus::BestEffort);
        assert_eq!(r.episodes, 1);
        let rep = r.report.unwrap();
        assert_eq!(rep.errors.iter().copied().collect::<Vec<_>>(), vec![ErrorMode::RelativeSpeedError]);
    }

    #[test]
    fn run_directory_layout_and_determinism() {
        let l = landscape();
        let mut tasks = vec![level1()];
        tasks.extend(certified_speedup_tasks(&l, &[sd15()], 0.8, 0.05, "sim").unwrap().into_iter().map(|(t, _)| t));
        let run = |dir: &Path| {
            let orch = Orchestrator::new(RunConfig { seed: 5, ..Default::default() }, mock_gateway(DeveloperProfile::default()), backend()).unwrap();
            orch.run_tasks(&tasks, Some(dir)).unwrap()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = run(a.path());
        run(b.path());
        for t in &tasks {
            assert!(a.path().join("audit").join(format!("{}.jsonl", t.task_id)).exists());
        }
        let db = |d: &Path, id: &str| fs::read(d.join("database").join(format!("{id}.jsonl"))).unwrap();
        let opt = &tasks[1].task_id;
        assert!(!db(a.path(), opt).is_empty());
        assert_eq!(db(a.path(), opt), db(b.path(), opt));
        assert_eq!(fs::read(a.path().join("summary.json")).unwrap(), fs::read(b.path().join("summary.json")).unwrap());
        let parsed: RunSummary = serde_json::from_slice(&fs::read(a.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(parsed.tasks.len(), 2);
        assert_eq!(parsed.suite, sa.suite);
        let gens = &sa.tasks[1].generation_summary;
        assert_eq!(gens.len() as u32, sa.tasks[1].generations);
    }

    /// Sim backend that is unreachable for one pipeline.
    struct Flaky(SimBackend);

    impl ExecutionBackend for Flaky {
        fn capabilities(&self) -> crate::sim::Capabilities {
            self.0.capabilities()
        }

        fn run(&self, source: &str, prompts: &[String], n: usize, seed: u64) -> Result<crate::sim::RunOutput, crate::sim::BackendError> {
            if source.contains("StableDiffusionImg2ImgPipeline") {
                return Err(crate::sim::BackendError::Unavailable("host down".into()));
            }
            self.0.run(source, prompts, n, seed)
        }
    }

    #[test]
    fn task_errors_are_data() {
        let img2img = landscape().profile("StableDiffusionImg2ImgPipeline").unwrap().default_attributes();
        let bad = baseline_candidates(&[img2img]).into_iter().find(|t| t.level == 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let orch = Orchestrator::new(RunConfig::default(), mock_gateway(DeveloperProfile::flawless()), Arc::new(Flaky(SimBackend::new(landscape())))).unwrap();
        let s = orch.run_tasks(&[bad, level1()], Some(dir.path())).unwrap();
        assert_eq!(s.tasks[0].status, TaskStatus::Error);
        assert!(s.tasks[0].error.as_deref().unwrap().contains("host down"));
        assert_eq!(s.tasks[1].status, TaskStatus::Passed);
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig { seed: 9, replan_cap: 1, ..Default::default() };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(RunConfig::from_toml_str("seed = 1\nbogus = 2").is_err());
        assert!(RunConfig::from_toml_str("[ga]\npopulation = 2\noffspring = 3").is_err());
    }

    #[test]
    fn generation_summary_keeps_best_per_generation() {
        let l = landscape();
        let (task, _) = certified_speedup_tasks(&l, &[sd15()], 1.2, 0.05, "sim").unwrap().remove(0);
        let orch = Orchestrator::new(RunConfig::default(), mock_gateway(DeveloperProfile::default()), backend()).unwrap();
        let r = orch.run_task(&task, None).unwrap();
        let g = generation_summaries(&r.records);
        assert_eq!(g.len(), 4);
        for s in &g {
            let want = r.records.iter().filter(|x| x.generation == s.generation).filter_map(|x| x.fitness).fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.max(f))));
            assert_eq!(s.best_fitness, want);
        }
    }
}
