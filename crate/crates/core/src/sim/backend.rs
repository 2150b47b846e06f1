use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::landscape::SimLandscape;
use crate::assess::{extract_attributes, scan};
use crate::task::{validate_attributes, Vocabulary};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed metrics record: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_quality: bool,
    pub supports_latency: bool,
    pub hardware_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    RuntimeFailure { message: String },
}

/// Per-sample measurements of one candidate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub status: RunStatus,
    pub latency: Vec<f64>,
    pub quality: Vec<f64>,
}

impl RunOutput {
    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            status: RunStatus::RuntimeFailure { message: message.into() },
            latency: Vec::new(),
            quality: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Executes candidate source on some environment.
pub trait ExecutionBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Runs `source` on the first `n` prompts with `seed`. Candidate-side
    /// failures are reported through [`RunStatus`], not as errors.
    fn run(&self, source: &str, prompts: &[String], n: usize, seed: u64) -> Result<RunOutput, BackendError>;
}

/// The bundled 10-prompt evaluation set.
pub fn bundled_prompts() -> Vec<String> {
    include_str!("../../data/prompt_set.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Prompt `i` of a set, cycling when the set is shorter than the run.
pub fn prompt_at(prompts: &[String], i: usize) -> Option<&str> {
    (!prompts.is_empty()).then(|| prompts[i % prompts.len()].as_str())
}

/// Deterministic simulated backend over a [`SimLandscape`].
///
/// The script is assessed statically; attributes it does not set take
/// the pipeline's defaults. Unscannable scripts, top-level `raise`
/// statements and invalid configurations are runtime failures.
#[derive(Debug, Clone)]
pub struct SimBackend {
    landscape: Arc<SimLandscape>,
    hardware_tag: String,
}

impl SimBackend {
    pub fn new(landscape: SimLandscape) -> Self {
        Self {
            landscape: Arc::new(landscape),
            hardware_tag: "sim".into(),
        }
    }

    pub fn with_hardware_tag(mut self, tag: impl Into<String>) -> Self {
        self.hardware_tag = tag.into();
        self
    }

    pub fn landscape(&self) -> &SimLandscape {
        &self.landscape
    }
}

fn line_at(source: &str, offset: usize) -> &str {
    let start = source[..offset].rfind('\n').map_or(0, |i| i + 1);
    let end = source[offset..].find('\n').map_or(source.len(), |i| offset + i);
    source[start..end].trim()
}

impl ExecutionBackend for SimBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_quality: true,
            supports_latency: true,
            hardware_tag: self.hardware_tag.clone(),
        }
    }

    fn run(&self, source: &str, _prompts: &[String], n: usize, seed: u64) -> Result<RunOutput, BackendError> {
        if n == 0 {
            return Ok(RunOutput::failure("sample count must be at least 1"));
        }
        let model = match scan(source) {
            Ok(m) => m,
            Err(e) => return Ok(RunOutput::failure(format!("SyntaxError: {e}"))),
        };
        if let Some(&at) = model.raises.first() {
            return Ok(RunOutput::failure(format!("Traceback: {}", line_at(source, at))));
        }
        let found = match extract_attributes(source) {
            Ok((found, _)) => found,
            Err(e) => return Ok(RunOutput::failure(format!("RuntimeError: {e}"))),
        };
        let Some(pipeline) = found.pipeline_class.as_deref() else {
            return Ok(RunOutput::failure("NameError: no diffusion pipeline constructed"));
        };
        let Some(profile) = self.landscape.profile(pipeline) else {
            return Ok(RunOutput::failure(format!("ImportError: pipeline {pipeline} is not available")));
        };
        let attrs = found.complete_with(&profile.default_attributes());
        let violations = validate_attributes(&attrs, Vocabulary::builtin());
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Ok(RunOutput::failure(format!("ValueError: {}", text.join("; "))));
        }
        let (latency, quality) = self.landscape.sample(profile, &attrs, n, seed);
        Ok(RunOutput {
            status: RunStatus::Ok,
            latency,
            quality,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    RuntimeFailure,
}

/// The single JSON record the external harness prints on stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub status: RecordStatus,
    /// Per-sample latency in seconds.
    #[serde(default)]
    pub latency_s: Vec<f64>,
    #[serde(default)]
    pub quality: Vec<f64>,
    #[serde(default)]
    pub failure_text: String,
    pub hardware_tag: String,
    pub seed: u64,
}

impl MetricsRecord {
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let r: MetricsRecord = serde_json::from_str(text.trim()).map_err(|e| BackendError::Protocol(e.to_string()))?;
        r.check()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    fn check(&self) -> Result<(), BackendError> {
        match self.status {
            RecordStatus::Ok => {
                if self.latency_s.is_empty() || self.latency_s.len() != self.quality.len() {
                    return Err(BackendError::Protocol(
                        "ok record needs equal-length non-empty latency_s and quality".into(),
                    ));
                }
            }
            RecordStatus::RuntimeFailure => {
                if self.failure_text.trim().is_empty() {
                    return Err(BackendError::Protocol("runtime_failure record needs failure_text".into()));
                }
            }
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        match self.status {
            RecordStatus::Ok => RunOutput {
                status: RunStatus::Ok,
                latency: self.latency_s,
                quality: self.quality,
            },
            RecordStatus::RuntimeFailure => RunOutput::failure(self.failure_text),
        }
    }
}

fn hardware_lock(tag: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    map.entry(tag.to_string()).or_default().clone()
}

/// Runs candidates through the external harness:
/// `<program> [args..] <candidate> <prompts> --n N --seed S`.
/// At most one run per hardware tag is in flight at a time.
#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub hardware_tag: String,
}

impl SubprocessBackend {
    pub fn new(program: impl Into<PathBuf>, hardware_tag: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            hardware_tag: hardware_tag.into(),
        }
    }
}

impl ExecutionBackend for SubprocessBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_quality: true,
            supports_latency: true,
            hardware_tag: self.hardware_tag.clone(),
        }
    }

    fn run(&self, source: &str, prompts: &[String], n: usize, seed: u64) -> Result<RunOutput, BackendError> {
        let io = |e: std::io::Error| BackendError::Unavailable(format!("temp file: {e}"));
        let mut candidate = tempfile::Builder::new().suffix(".py").tempfile().map_err(io)?;
        candidate.write_all(source.as_bytes()).map_err(io)?;
        let mut prompt_file = tempfile::Builder::new().suffix(".txt").tempfile().map_err(io)?;
        for p in prompts {
            writeln!(prompt_file, "{p}").map_err(io)?;
        }
        candidate.flush().map_err(io)?;
        prompt_file.flush().map_err(io)?;

        let lock = hardware_lock(&self.hardware_tag);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(candidate.path())
            .arg(prompt_file.path())
            .arg("--n")
            .arg(n.to_string())
            .arg("--seed")
            .arg(seed.to_string())
            .output()
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(BackendError::Unavailable(format!(
                "harness exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let line = stdout
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| BackendError::Protocol("empty harness output".into()))?;
        Ok(MetricsRecord::parse(line)?.into_output())
    }
}
