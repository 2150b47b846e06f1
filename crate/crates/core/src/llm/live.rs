use std::time::Duration;

use serde_json::{json, Value};

use super::gateway::{CallContext, CompletionParams, Message, Transport, TransportError, TransportResponse};

pub const ENV_ENDPOINT: &str = "ACCELFORGE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "ACCELFORGE_LLM_API_KEY";
pub const ENV_MODEL: &str = "ACCELFORGE_LLM_MODEL";

/// OpenAI-compatible chat completions over HTTP.
pub struct LiveTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl LiveTransport {
    /// `endpoint` is the API base, e.g. `https://host/v1`.
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Reads the endpoint, key and model name from the environment.
    pub fn from_env() -> Result<(Self, Option<String>), String> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| format!("{ENV_ENDPOINT} is not set"))?;
        let key = std::env::var(ENV_API_KEY).ok();
        let model = std::env::var(ENV_MODEL).ok();
        Ok((Self::new(endpoint, key, Duration::from_secs(120)), model))
    }
}

fn parse_completion(v: &Value) -> Result<TransportResponse, TransportError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("no choices[0].message.content string".into()))?;
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(TransportResponse {
        text: text.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        latency_s: None,
    })
}

impl Transport for LiveTransport {
    fn send(&self, messages: &[Message], params: &CompletionParams, _ctx: &CallContext) -> Result<TransportResponse, TransportError> {
        let body = json!({
            "model": params.model_name,
            "messages": messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect::<Vec<_>>(),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let mut req = self.agent.post(&format!("{}/chat/completions", self.endpoint));
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Other(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        match status {
            429 => return Err(TransportError::RateLimited),
            408 | 504 => return Err(TransportError::Timeout),
            200..=299 => {}
            s if s >= 500 => return Err(TransportError::Other(format!("HTTP {s}"))),
            s => return Err(TransportError::Malformed(format!("HTTP {s}"))),
        }
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Malformed(e.to_string()))?;
        parse_completion(&v)
    }
}
