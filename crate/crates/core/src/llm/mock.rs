use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::gateway::{fingerprint, CallContext, CompletionParams, Message, Stage, Transport, TransportError, TransportResponse};

/// Produces a completion for a request. Implementations must be a pure
/// function of `(messages, ctx.seed)` to keep runs reproducible.
pub trait Responder: Send + Sync {
    fn respond(&self, messages: &[Message], ctx: &CallContext) -> String;
}

/// Fixed completions keyed by prompt fingerprint.
#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    scripts: HashMap<String, String>,
    fallback: Option<String>,
}

impl ScriptedResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(mut self, messages: &[Message], completion: impl Into<String>) -> Self {
        self.scripts.insert(fingerprint(messages), completion.into());
        self
    }

    pub fn fallback(mut self, completion: impl Into<String>) -> Self {
        self.fallback = Some(completion.into());
        self
    }
}

impl Responder for ScriptedResponder {
    fn respond(&self, messages: &[Message], _ctx: &CallContext) -> String {
        self.scripts
            .get(&fingerprint(messages))
            .or(self.fallback.as_ref())
            .cloned()
            .unwrap_or_default()
    }
}

/// Hands out completions in order, one queue per stage. Meant for
/// single-threaded tests of control flow.
#[derive(Debug, Default)]
pub struct SequenceResponder {
    queues: Mutex<BTreeMap<Stage, VecDeque<String>>>,
    repeat_last: Mutex<BTreeMap<Stage, String>>,
}

impl SequenceResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, stage: Stage, completion: impl Into<String>) -> Self {
        self.queues
            .lock()
            .unwrap()
            .entry(stage)
            .or_default()
            .push_back(completion.into());
        self
    }
}

impl Responder for SequenceResponder {
    fn respond(&self, _messages: &[Message], ctx: &CallContext) -> String {
        let mut q = self.queues.lock().unwrap();
        match q.get_mut(&ctx.stage).and_then(VecDeque::pop_front) {
            Some(s) => {
                self.repeat_last.lock().unwrap().insert(ctx.stage, s.clone());
                s
            }
            None => self.repeat_last.lock().unwrap().get(&ctx.stage).cloned().unwrap_or_default(),
        }
    }
}

/// In-process transport around a [`Responder`], with failure injection by
/// transport invocation index and its own invocation counter.
pub struct MockTransport<R> {
    responder: R,
    failures: Mutex<BTreeMap<u64, TransportError>>,
    invocations: AtomicU64,
}

impl<R: Responder> MockTransport<R> {
    pub fn new(responder: R) -> Self {
        Self {
            responder,
            failures: Mutex::new(BTreeMap::new()),
            invocations: AtomicU64::new(0),
        }
    }

    /// Fails the `index`-th transport invocation (0-based) with `err`.
    pub fn fail_at(self, index: u64, err: TransportError) -> Self {
        self.failures.lock().unwrap().insert(index, err);
        self
    }

    /// Transport invocations so far, retries included.
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn responder(&self) -> &R {
        &self.responder
    }
}

fn count_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl<R: Responder> Transport for MockTransport<R> {
    fn send(&self, messages: &[Message], _params: &CompletionParams, ctx: &CallContext) -> Result<TransportResponse, TransportError> {
        let i = self.invocations.fetch_add(1, Ordering::SeqCst);
        if let Some(err) = self.failures.lock().unwrap().remove(&i) {
            return Err(err);
        }
        let text = self.responder.respond(messages, ctx);
        Ok(TransportResponse {
            prompt_tokens: messages.iter().map(|m| count_tokens(&m.content)).sum(),
            completion_tokens: count_tokens(&text),
            text,
            latency_s: Some(0.0),
        })
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, messages: &[Message], params: &CompletionParams, ctx: &CallContext) -> Result<TransportResponse, TransportError> {
        (**self).send(messages, params, ctx)
    }
}
