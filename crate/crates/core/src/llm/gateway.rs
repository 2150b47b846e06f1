use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jsonl::JsonlWriter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(c: impl Into<String>) -> Self {
        Self { role: Role::System, content: c.into() }
    }
    pub fn user(c: impl Into<String>) -> Self {
        Self { role: Role::User, content: c.into() }
    }
    pub fn assistant(c: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: c.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            max_tokens: 2048,
            model_name: "mock".into(),
        }
    }
}

/// The agent stage a call is made for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Planning,
    Coding,
    Debugging,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Planning => "planning",
            Stage::Coding => "coding",
            Stage::Debugging => "debugging",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a call comes from. `seed` is derived from the session and the
/// per-episode call index, never from global call order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallContext {
    pub scope: String,
    pub episode: String,
    pub stage: Stage,
    pub seed: u64,
}

/// Stable hash of the normalized message list: roles plus contents with
/// runs of whitespace collapsed and ends trimmed.
pub fn fingerprint(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0u8]);
        let normalized: Vec<&str> = m.content.split_whitespace().collect();
        h.update(normalized.join(" ").as_bytes());
        h.update([0x1eu8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// FNV-1a, used to derive seeds from labels.
pub fn hash_label(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport failure: {0}")]
    Other(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        matches!(self, TransportError::Timeout | TransportError::RateLimited | TransportError::Other(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Simulated latency; real transports leave this unset and the gateway
    /// measures wall time.
    pub latency_s: Option<f64>,
}

pub trait Transport: Send + Sync {
    fn send(&self, messages: &[Message], params: &CompletionParams, ctx: &CallContext) -> Result<TransportResponse, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("gateway timeout after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed completion: {0}")]
    Malformed(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("call budget of {limit} exhausted")]
    BudgetExhausted { limit: u64 },
    #[error("no messages to send")]
    EmptyMessages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts per call, first one included.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Fractional jitter added on top of the exponential delay.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Zero delays, for mock runs.
    pub fn immediate() -> Self {
        Self {
            base_delay_ms: 0,
            max_delay_ms: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (1-based attempt that failed).
    pub fn delay(&self, attempt: u32, seed: u64) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(20));
        let base = exp.min(self.max_delay_ms) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(attempt));
        let j: f64 = rng.random_range(0.0..=1.0);
        Duration::from_micros((base * (1.0 + self.jitter * j) * 1000.0) as u64)
    }
}

/// One completed (or failed) call, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub scope: String,
    pub episode: String,
    pub stage: Stage,
    /// Index of this call within its session.
    pub call_index: u64,
    pub fingerprint: String,
    pub messages: Vec<Message>,
    #[serde(default)]
    pub completion: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
    /// 1-based attempt that produced this outcome.
    pub attempt: u32,
}

struct Limiter {
    max: usize,
    current: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.cv.notify_one();
    }
}

/// Thread-safe chat client with retries, an in-flight limit and an audit
/// log shared by all sessions.
pub struct Gateway {
    transport: Arc<dyn Transport>,
    params: CompletionParams,
    retry: RetryPolicy,
    limiter: Limiter,
    audit: Option<Arc<JsonlWriter<ChatExchange>>>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, params: CompletionParams, retry: RetryPolicy) -> Self {
        Self {
            transport,
            params,
            retry,
            limiter: Limiter {
                max: 8,
                current: Mutex::new(0),
                cv: Condvar::new(),
            },
            audit: None,
        }
    }

    pub fn with_in_flight_limit(mut self, max: usize) -> Self {
        self.limiter.max = max.max(1);
        self
    }

    pub fn with_audit(mut self, audit: Arc<JsonlWriter<ChatExchange>>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn params(&self) -> &CompletionParams {
        &self.params
    }

    /// New per-task accounting scope. `budget` caps the number of calls.
    pub fn session(self: &Arc<Self>, scope: impl Into<String>, seed: u64, budget: Option<u64>) -> Session {
        Session {
            gateway: self.clone(),
            scope: scope.into(),
            seed,
            budget,
            state: Mutex::new(SessionState::default()),
        }
    }

    fn log(&self, ex: &ChatExchange) {
        if let Some(a) = &self.audit {
            if let Err(e) = a.append(ex) {
                log::warn!("audit log write failed: {e}");
            }
        }
    }
}

#[derive(Default)]
struct SessionState {
    calls: u64,
    per_stage: BTreeMap<Stage, u64>,
    per_episode: BTreeMap<String, u64>,
    exchanges: Vec<ChatExchange>,
}

/// Call accounting for one task run.
pub struct Session {
    gateway: Arc<Gateway>,
    scope: String,
    seed: u64,
    budget: Option<u64>,
    state: Mutex<SessionState>,
}

impl Session {
    pub fn scope(&self) -> &str {
        &self.scope
    }

    pub fn calls(&self) -> u64 {
        self.lock().calls
    }

    pub fn per_stage(&self) -> BTreeMap<Stage, u64> {
        self.lock().per_stage.clone()
    }

    /// Calls of `stages` made in `episode`.
    pub fn episode_calls(&self, episode: &str, stages: &[Stage]) -> u64 {
        self.lock()
            .exchanges
            .iter()
            .filter(|e| e.episode == episode && stages.contains(&e.stage))
            .count() as u64
    }

    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.lock().exchanges.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn complete(&self, stage: Stage, episode: &str, messages: Vec<Message>) -> Result<ChatExchange, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        let (call_index, seed) = {
            let mut st = self.lock();
            if let Some(limit) = self.budget {
                if st.calls >= limit {
                    return Err(GatewayError::BudgetExhausted { limit });
                }
            }
            st.calls += 1;
            *st.per_stage.entry(stage).or_default() += 1;
            let k = st.per_episode.entry(episode.to_string()).or_default();
            let idx = *k;
            *k += 1;
            let seed = hash_label(&[&self.seed.to_string(), &self.scope, episode, &idx.to_string()]);
            (st.calls - 1, seed)
        };
        let ctx = CallContext {
            scope: self.scope.clone(),
            episode: episode.to_string(),
            stage,
            seed,
        };
        let fp = fingerprint(&messages);
        let gw = &self.gateway;
        let mut attempt = 0;
        let outcome = loop {
            attempt += 1;
            let started = Instant::now();
            let res = {
                let _slot = gw.limiter.acquire();
                gw.transport.send(&messages, &gw.params, &ctx)
            };
            let elapsed = started.elapsed().as_secs_f64();
            match res {
                Ok(r) if r.text.trim().is_empty() => {
                    break Err((GatewayError::Malformed("empty completion".into()), elapsed));
                }
                Ok(r) => break Ok((r, elapsed)),
                Err(e) if e.retryable() && attempt < gw.retry.max_attempts => {
                    std::thread::sleep(gw.retry.delay(attempt, seed));
                }
                Err(e) => {
                    let err = match e {
                        TransportError::Timeout => GatewayError::Timeout { attempts: attempt },
                        TransportError::RateLimited => GatewayError::RateLimited { attempts: attempt },
                        TransportError::Malformed(m) => GatewayError::Malformed(m),
                        TransportError::Other(message) => GatewayError::Transport { attempts: attempt, message },
                    };
                    break Err((err, elapsed));
                }
            }
        };
        let mut ex = ChatExchange {
            scope: self.scope.clone(),
            episode: episode.to_string(),
            stage,
            call_index,
            fingerprint: fp,
            messages,
            completion: None,
            error: None,
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_s: 0.0,
            attempt,
        };
        let result = match outcome {
            Ok((r, elapsed)) => {
                ex.completion = Some(r.text);
                ex.prompt_tokens = r.prompt_tokens;
                ex.completion_tokens = r.completion_tokens;
                ex.latency_s = r.latency_s.unwrap_or(elapsed);
                Ok(())
            }
            Err((e, elapsed)) => {
                ex.error = Some(e.to_string());
                ex.latency_s = elapsed;
                Err(e)
            }
        };
        gw.log(&ex);
        self.lock().exchanges.push(ex.clone());
        result.map(|()| ex)
    }
}
