//! Planner, coder and debugger roles over a gateway session.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feedback::FeedbackReport;
use super::genome::{Lineage, Origin, PlanGenome};
use super::kb::KnowledgeBase;
use super::prompts::{config_toml, extract_code, fill, parse_plan, section, wrap, PromptTemplates};
use crate::llm::{GatewayError, Message, Session, Stage};
use crate::sim::{BackendError, ExecutionBackend, RunStatus};

#[derive(Debug, Error)]
pub enum AgentError {
    /// The planner answered twice without a usable `<config>` block.
    #[error("unparseable plan: {reason}")]
    UnparseablePlan { reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Per-episode call limits. Each code cycle is one generation call followed
/// by up to `t_debug - 1` repair calls, so an episode makes at most
/// `t_code * t_debug` coding and debugging calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeBudget {
    pub t_code: u32,
    pub t_debug: u32,
    /// `false`: no repair calls and no reflection; `t_debug` acts as 1.
    pub debugging: bool,
}

impl Default for EpisodeBudget {
    fn default() -> Self {
        Self { t_code: 5, t_debug: 3, debugging: true }
    }
}

impl EpisodeBudget {
    pub fn effective_t_debug(&self) -> u32 {
        if self.debugging { self.t_debug.max(1) } else { 1 }
    }

    pub fn max_calls(&self) -> u32 {
        self.t_code * self.effective_t_debug()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success { source: String, cycles: u32, repairs: u32 },
    /// Every cycle ended with a non-runnable script, or the gateway budget
    /// ran out. `replan` asks the caller for a new plan.
    Failure { replan: bool, last_error: String, cycles: u32, repairs: u32 },
}

impl EpisodeOutcome {
    pub fn source(&self) -> Option<&str> {
        match self {
            Self::Success { source, .. } => Some(source),
            Self::Failure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Generation,
    Optimization,
}

/// The three roles plus their shared configuration.
#[derive(Debug, Clone)]
pub struct Agents {
    pub templates: PromptTemplates,
    pub kb: KnowledgeBase,
    pub budget: EpisodeBudget,
    /// Prompts and sample count of the runnability check inside episodes.
    pub check_prompts: Vec<String>,
    pub check_samples: usize,
}

impl Agents {
    pub fn new(kb: KnowledgeBase, budget: EpisodeBudget) -> Self {
        Self {
            templates: PromptTemplates::builtin(),
            kb,
            budget,
            check_prompts: crate::sim::bundled_prompts(),
            check_samples: 1,
        }
    }

    fn insights_block(&self, methods: &BTreeSet<String>) -> String {
        let ins = self.kb.insights_for(methods);
        if ins.is_empty() {
            return String::new();
        }
        let body: Vec<String> = ins.iter().map(|i| format!("- {}: {}", i.method, i.text)).collect();
        wrap("insights", &body.join("\n"))
    }

    /// Completes a planning request, with one reformat retry when the answer
    /// has no usable configuration.
    fn planning_call(
        &self,
        session: &Session,
        episode: &str,
        user: String,
        need_baseline: bool,
    ) -> Result<super::prompts::ParsedPlan, AgentError> {
        let mut messages = vec![Message::system(&self.templates.planner_system), Message::user(user)];
        let first = session.complete(Stage::Planning, episode, messages.clone())?;
        let text = first.completion.unwrap_or_default();
        match parse_plan(&text, need_baseline) {
            Ok(p) => Ok(p),
            Err(_) => {
                messages.push(Message::assistant(&text));
                messages.push(Message::user(fill(&self.templates.plan_reformat, &[("previous", &text)])));
                let second = session.complete(Stage::Planning, episode, messages)?;
                parse_plan(&second.completion.unwrap_or_default(), need_baseline)
                    .map_err(|reason| AgentError::UnparseablePlan { reason })
            }
        }
    }

    pub fn plan(
        &self,
        session: &Session,
        episode: &str,
        request: &str,
        mode: PlanMode,
        generation: u32,
    ) -> Result<PlanGenome, AgentError> {
        let template = match mode {
            PlanMode::Generation => &self.templates.plan_generation,
            PlanMode::Optimization => &self.templates.plan_optimization,
        };
        let user = fill(template, &[("request", request), ("insights", &self.insights_block(&BTreeSet::new()))]);
        let p = self.planning_call(session, episode, user, mode == PlanMode::Optimization)?;
        Ok(PlanGenome {
            plan_text: p.plan_text,
            encoded_config: p.config,
            baseline: p.baseline,
            lineage: Lineage { generation, parent: None },
            origin: Origin::Fresh,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn refine_plan(
        &self,
        session: &Session,
        episode: &str,
        request: &str,
        parent_id: &str,
        parent: &PlanGenome,
        feedback: &FeedbackReport,
        generation: u32,
    ) -> Result<PlanGenome, AgentError> {
        let methods = parent.encoded_config.accel_methods.keys().cloned().collect();
        let user = fill(
            &self.templates.plan_refine,
            &[
                ("request", request),
                ("parent_plan", &plan_body(parent)),
                ("feedback", &feedback.render()),
                ("insights", &self.insights_block(&methods)),
            ],
        );
        let p = self.planning_call(session, episode, user, false)?;
        Ok(PlanGenome {
            plan_text: p.plan_text,
            encoded_config: p.config,
            baseline: p.baseline.or_else(|| parent.baseline.clone()),
            lineage: Lineage { generation, parent: Some(parent_id.to_string()) },
            origin: Origin::Refined,
        })
    }

    fn reference_block(&self, plan: &PlanGenome) -> String {
        let Some(pipeline) = plan.encoded_config.pipeline_class.as_deref() else {
            return String::new();
        };
        let methods: BTreeSet<String> = plan.encoded_config.accel_methods.keys().cloned().collect();
        match self.kb.lookup(pipeline, &methods) {
            Some(t) => format!("<reference id=\"kb/{}\">\n{}\n</reference>", t.id, t.code.trim_end()),
            None => String::new(),
        }
    }

    /// One coding call: plan in, script out.
    pub fn code(&self, session: &Session, episode: &str, plan: &PlanGenome) -> Result<String, AgentError> {
        let user = fill(
            &self.templates.code,
            &[("plan", &plan_body(plan)), ("reference", &self.reference_block(plan))],
        );
        let ex = session.complete(Stage::Coding, episode, vec![Message::system(&self.templates.coder_system), Message::user(user)])?;
        Ok(extract_code(&ex.completion.unwrap_or_default()))
    }

    fn repair(
        &self,
        session: &Session,
        episode: &str,
        plan: &PlanGenome,
        source: &str,
        error: &str,
        memory: &[String],
    ) -> Result<(String, String), AgentError> {
        let mem = if memory.is_empty() {
            String::new()
        } else {
            wrap("memory", &memory.join("\n---\n"))
        };
        let user = fill(
            &self.templates.debug,
            &[("plan", &plan_body(plan)), ("code", source), ("error", error), ("memory", &mem)],
        );
        let ex = session.complete(
            Stage::Debugging,
            episode,
            vec![Message::system(&self.templates.debugger_system), Message::user(user)],
        )?;
        let text = ex.completion.unwrap_or_default();
        let reflection = section(&text, "reflection").unwrap_or("").to_string();
        Ok((extract_code(&text), reflection))
    }

    /// Runs the runnability loop from an already generated script. The
    /// initial script counts as the first cycle's generation call.
    pub fn debug_episode(
        &self,
        session: &Session,
        episode: &str,
        plan: &PlanGenome,
        initial_source: String,
        backend: &dyn ExecutionBackend,
        seed: u64,
    ) -> Result<EpisodeOutcome, AgentError> {
        let t_debug = self.budget.effective_t_debug();
        let mut repairs = 0;
        let mut last_error = String::new();
        let mut source = initial_source;
        let mut cycles = 0;
        for cycle in 0..self.budget.t_code {
            cycles = cycle + 1;
            if cycle > 0 {
                source = match self.code(session, episode, plan) {
                    Ok(s) => s,
                    Err(AgentError::Gateway(GatewayError::BudgetExhausted { .. })) => {
                        return Ok(EpisodeOutcome::Failure { replan: true, last_error: "call budget exhausted".into(), cycles, repairs })
                    }
                    Err(e) => return Err(e),
                };
            }
            // memory lives for one cycle: a regenerated script starts clean
            let mut memory: Vec<String> = Vec::new();
            for attempt in 0..t_debug {
                let run = backend.run(&source, &self.check_prompts, self.check_samples, seed)?;
                let err = match run.status {
                    RunStatus::Ok => return Ok(EpisodeOutcome::Success { source, cycles, repairs }),
                    RunStatus::RuntimeFailure { message } => message,
                };
                last_error = err.clone();
                if attempt + 1 == t_debug {
                    break;
                }
                match self.repair(session, episode, plan, &source, &err, &memory) {
                    Ok((fixed, reflection)) => {
                        repairs += 1;
                        memory.push(format!("error: {err}\nreflection: {reflection}"));
                        source = fixed;
                    }
                    Err(AgentError::Gateway(GatewayError::BudgetExhausted { .. })) => {
                        return Ok(EpisodeOutcome::Failure { replan: true, last_error: "call budget exhausted".into(), cycles, repairs })
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(EpisodeOutcome::Failure { replan: true, last_error, cycles, repairs })
    }

    /// Coding call plus the debug loop.
    pub fn run_episode(
        &self,
        session: &Session,
        episode: &str,
        plan: &PlanGenome,
        backend: &dyn ExecutionBackend,
        seed: u64,
    ) -> Result<EpisodeOutcome, AgentError> {
        if self.budget.t_code == 0 {
            return Ok(EpisodeOutcome::Failure { replan: true, last_error: "t_code is 0".into(), cycles: 0, repairs: 0 });
        }
        let source = match self.code(session, episode, plan) {
            Ok(s) => s,
            Err(AgentError::Gateway(GatewayError::BudgetExhausted { .. })) => {
                return Ok(EpisodeOutcome::Failure { replan: true, last_error: "call budget exhausted".into(), cycles: 0, repairs: 0 })
            }
            Err(e) => return Err(e),
        };
        self.debug_episode(session, episode, plan, source, backend, seed)
    }
}

/// Plan prose plus its configuration blocks, as shown to other roles.
pub fn plan_body(plan: &PlanGenome) -> String {
    let mut s = format!("{}\n{}", plan.plan_text.trim_end(), wrap("config", &config_toml(&plan.encoded_config)));
    if let Some(b) = &plan.baseline {
        s.push('\n');
        s.push_str(&wrap("baseline", &config_toml(b)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::PartialAttributes;
    use crate::llm::{CompletionParams, Gateway, MockTransport, RetryPolicy, SequenceResponder};
    use crate::render::render_program;
    use crate::sim::{SimBackend, SimLandscape};
    use crate::task::{Conditioning, KeyAttributes, Resolution};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn attrs() -> KeyAttributes {
        KeyAttributes {
            pipeline_class: "StableDiffusionPipeline".into(),
            model_id: "stable-diffusion-v1-5".into(),
            scheduler_class: "DDIMScheduler".into(),
            num_inference_steps: 30,
            resolution: Resolution::new(512, 512),
            conditioning: Conditioning::Text2img,
            preprocessors: Default::default(),
            accel_methods: Default::default(),
        }
    }

    fn good() -> String {
        format!("<code>\n{}</code>", render_program(&attrs(), None))
    }

    const BAD: &str = "<code>\npipe = StableDiffusionPipeline.from_pretrained(\"x\"\n</code>";

    fn plan() -> PlanGenome {
        PlanGenome {
            plan_text: "plain".into(),
            encoded_config: PartialAttributes::from_full(&attrs()),
            baseline: None,
            lineage: Lineage { generation: 0, parent: None },
            origin: Origin::Fresh,
        }
    }

    fn setup(r: SequenceResponder, budget: Option<u64>) -> Session {
        let t = Arc::new(MockTransport::new(r));
        Arc::new(Gateway::new(t, CompletionParams::default(), RetryPolicy::immediate())).session("task", 0, budget)
    }

    fn backend() -> SimBackend {
        SimBackend::new(SimLandscape::builtin())
    }

    fn agents(t_code: u32, t_debug: u32, debugging: bool) -> Agents {
        Agents::new(KnowledgeBase::builtin(), EpisodeBudget { t_code, t_debug, debugging })
    }

    const CD: &[Stage] = &[Stage::Coding, Stage::Debugging];

    #[test]
    fn default_budget() {
        let b = EpisodeBudget::default();
        assert_eq!((b.t_code, b.t_debug), (5, 3));
        assert_eq!(b.max_calls(), 15);
    }

    #[test]
    fn runnable_first_time() {
        let s = setup(SequenceResponder::new().push(Stage::Coding, good()), None);
        let out = agents(3, 5, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        assert!(matches!(out, EpisodeOutcome::Success { repairs: 0, cycles: 1, .. }));
        assert_eq!(s.episode_calls("e", CD), 1);
    }

    #[test]
    fn one_failure_then_repair() {
        let r = SequenceResponder::new().push(Stage::Coding, BAD).push(Stage::Debugging, good());
        let s = setup(r, None);
        let out = agents(3, 5, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        assert!(matches!(out, EpisodeOutcome::Success { repairs: 1, .. }), "{out:?}");
        assert_eq!(s.episode_calls("e", CD), 2);
    }

    #[test]
    fn always_failing_exhausts_every_cycle() {
        let r = SequenceResponder::new().push(Stage::Coding, BAD).push(Stage::Debugging, BAD);
        let s = setup(r, None);
        let out = agents(3, 5, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        match out {
            EpisodeOutcome::Failure { replan, cycles, repairs, last_error } => {
                assert!(replan);
                assert_eq!(cycles, 3);
                assert_eq!(repairs, 12);
                assert!(last_error.starts_with("SyntaxError"), "{last_error}");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.per_stage()[&Stage::Coding], 3);
        assert_eq!(s.episode_calls("e", CD), 15);
    }

    #[test]
    fn debugging_disabled_only_regenerates() {
        let r = SequenceResponder::new().push(Stage::Coding, BAD);
        let s = setup(r, None);
        let out = agents(3, 5, false).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        assert!(matches!(out, EpisodeOutcome::Failure { repairs: 0, cycles: 3, .. }));
        assert_eq!(s.episode_calls("e", CD), 3);
        assert!(!s.per_stage().contains_key(&Stage::Debugging));
    }

    #[test]
    fn memory_resets_on_regeneration() {
        let r = SequenceResponder::new().push(Stage::Coding, BAD).push(Stage::Debugging, BAD);
        let s = setup(r, None);
        agents(2, 3, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        let debug: Vec<bool> = s
            .exchanges()
            .iter()
            .filter(|x| x.stage == Stage::Debugging)
            .map(|x| x.messages.iter().any(|m| m.content.contains("<memory>")))
            .collect();
        // two repairs per cycle: the first of each cycle starts without memory
        assert_eq!(debug, [false, true, false, true]);
    }

    #[test]
    fn budget_exhaustion_is_an_episode_failure() {
        let r = SequenceResponder::new().push(Stage::Coding, BAD).push(Stage::Debugging, BAD);
        let s = setup(r, Some(4));
        let out = agents(3, 5, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
        assert!(matches!(out, EpisodeOutcome::Failure { replan: true, .. }));
        assert_eq!(s.calls(), 4);
    }

    #[test]
    fn reformat_retry_then_unparseable() {
        let ok = "<plan>\np\n</plan>\n<config>\npipeline_class = \"DiTPipeline\"\n</config>";
        let s = setup(SequenceResponder::new().push(Stage::Planning, "no config").push(Stage::Planning, ok), None);
        let p = agents(3, 5, true).plan(&s, "e", "req", PlanMode::Generation, 0).unwrap();
        assert_eq!(p.encoded_config.pipeline_class.as_deref(), Some("DiTPipeline"));
        assert_eq!(s.calls(), 2);

        let s = setup(SequenceResponder::new().push(Stage::Planning, "still prose"), None);
        let err = agents(3, 5, true).plan(&s, "e", "req", PlanMode::Generation, 0).unwrap_err();
        assert!(matches!(err, AgentError::UnparseablePlan { .. }));
        assert_eq!(s.calls(), 2);
        // optimization plans also need a baseline block
        let s = setup(SequenceResponder::new().push(Stage::Planning, ok), None);
        assert!(agents(3, 5, true).plan(&s, "e", "req", PlanMode::Optimization, 0).is_err());
    }

    #[test]
    fn refined_plans_record_their_parent() {
        let ok = "<plan>\np\n</plan>\n<config>\npipeline_class = \"DiTPipeline\"\n</config>";
        let s = setup(SequenceResponder::new().push(Stage::Planning, ok), None);
        let fb = FeedbackReport { candidate_id: "t/g0/s1".into(), gaps: vec![], errors: Default::default(), mismatches: vec![], runtime_error: None };
        let p = agents(3, 5, true).refine_plan(&s, "t/g1/s0", "req", "t/g0/s1", &plan(), &fb, 1).unwrap();
        assert_eq!(p.origin, Origin::Refined);
        assert_eq!(p.lineage, Lineage { generation: 1, parent: Some("t/g0/s1".into()) });
        assert!(p.lineage_is_consistent());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn episode_calls_never_exceed_budget(
            t_code in 1u32..6,
            t_debug in 1u32..6,
            coding in proptest::collection::vec(any::<bool>(), 1..8),
            debugging in proptest::collection::vec(any::<bool>(), 1..20),
        ) {
            let mut r = SequenceResponder::new();
            for (stage, pattern) in [(Stage::Coding, &coding), (Stage::Debugging, &debugging)] {
                for ok in pattern {
                    r = r.push(stage, if *ok { good() } else { BAD.to_string() });
                }
            }
            let s = setup(r, None);
            let out = agents(t_code, t_debug, true).run_episode(&s, "e", &plan(), &backend(), 0).unwrap();
            let calls = s.episode_calls("e", CD);
            prop_assert!(calls <= u64::from(t_code * t_debug));
            if let EpisodeOutcome::Failure { .. } = out {
                prop_assert_eq!(calls, u64::from(t_code * t_debug));
            }
        }
    }
}
