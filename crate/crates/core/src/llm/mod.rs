//! Chat-completion gateway: retries, call budgets, audit logging, and
//! deterministic mock transports.

mod gateway;
mod live;
mod mock;

pub use gateway::{
    fingerprint, hash_label, CallContext, ChatExchange, CompletionParams, Gateway, GatewayError, Message, RetryPolicy, Role,
    Session, Stage, Transport, TransportError, TransportResponse,
};
pub use live::{LiveTransport, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use mock::{MockTransport, Responder, ScriptedResponder, SequenceResponder};
