//! On-disk task and manifest formats (TOML).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{validate_attributes, TaskSpec};
use super::vocabulary::Vocabulary;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {field} {rule}")]
    Schema { field: String, rule: String },
}

impl TaskError {
    fn schema(field: impl Into<String>, rule: impl Into<String>) -> Self {
        TaskError::Schema {
            field: field.into(),
            rule: rule.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        TaskError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// How unknown keys in task documents are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPolicy {
    #[default]
    Strict,
    /// Unknown keys are logged and dropped.
    Lenient,
}

/// Checks the task-level invariants, including the ground-truth attributes.
pub fn validate_task(task: &TaskSpec, vocab: &Vocabulary) -> Result<(), TaskError> {
    if task.task_id.trim().is_empty() {
        return Err(TaskError::schema("task_id", "must be non-empty"));
    }
    if !(1..=5).contains(&task.level) {
        return Err(TaskError::schema("level", "must be in 1..=5"));
    }
    let delta = task.quality_threshold;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TaskError::schema("quality_threshold", "must be in (0, 1)"));
    }
    match task.level {
        1..=3 => {
            if task.speedup_requirement.is_some() {
                return Err(TaskError::schema(
                    "speedup_requirement",
                    format!("not allowed at level {}", task.level),
                ));
            }
            if task.latency_bound.is_some() {
                return Err(TaskError::schema(
                    "latency_bound",
                    format!("not allowed at level {}", task.level),
                ));
            }
            if task.difficulty.is_some() {
                return Err(TaskError::schema(
                    "difficulty",
                    format!("not allowed at level {}", task.level),
                ));
            }
        }
        4 => {
            match task.speedup_requirement {
                None => return Err(TaskError::schema("speedup_requirement", "required at level 4")),
                Some(u) if !(u > 1.0) || !u.is_finite() => {
                    return Err(TaskError::schema("speedup_requirement", "must be > 1"))
                }
                _ => {}
            }
            if task.latency_bound.is_some() {
                return Err(TaskError::schema("latency_bound", "not allowed at level 4"));
            }
        }
        _ => {
            match task.latency_bound {
                None => return Err(TaskError::schema("latency_bound", "required at level 5")),
                Some(t) if !(t > 0.0) || !t.is_finite() => {
                    return Err(TaskError::schema("latency_bound", "must be > 0"))
                }
                _ => {}
            }
            if task.speedup_requirement.is_some() {
                return Err(TaskError::schema("speedup_requirement", "not allowed at level 5"));
            }
        }
    }
    if let Some(v) = validate_attributes(&task.ground_truth, vocab).into_iter().next() {
        return Err(TaskError::schema(format!("ground_truth.{}", v.field), v.rule));
    }
    Ok(())
}

/// Parses a task document and validates it against `vocab`.
pub fn parse_task(text: &str, policy: KeyPolicy, vocab: &Vocabulary) -> Result<TaskSpec, TaskError> {
    let task: TaskSpec = parse_with_policy(text, policy)?;
    validate_task(&task, vocab)?;
    Ok(task)
}

fn parse_with_policy<T: serde::de::DeserializeOwned>(text: &str, policy: KeyPolicy) -> Result<T, TaskError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let value: T = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| TaskError::Parse(e.message().trim().to_string()))?;
    if let Some(first) = unknown.first() {
        match policy {
            KeyPolicy::Strict => return Err(TaskError::schema(first.clone(), "unknown key")),
            KeyPolicy::Lenient => {
                for key in &unknown {
                    log::warn!("ignoring unknown key `{key}`");
                }
            }
        }
    }
    Ok(value)
}

pub fn task_to_string(task: &TaskSpec) -> String {
    toml::to_string_pretty(task).expect("task specs always serialize")
}

/// Loads a task file with the built-in vocabulary.
pub fn load_task(path: &Path) -> Result<TaskSpec, TaskError> {
    load_task_with(path, KeyPolicy::Strict, Vocabulary::builtin())
}

pub fn load_task_with(path: &Path, policy: KeyPolicy, vocab: &Vocabulary) -> Result<TaskSpec, TaskError> {
    let text = fs::read_to_string(path).map_err(|e| TaskError::io(path, e))?;
    parse_task(&text, policy, vocab)
}

pub fn save_task(task: &TaskSpec, path: &Path) -> Result<(), TaskError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| TaskError::io(dir, e))?;
    }
    fs::write(path, task_to_string(task)).map_err(|e| TaskError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub level: u8,
}

/// Ordered list of task files with their levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// Stage-2 absolute quality floor shared by the suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_floor: Option<f64>,
    #[serde(default)]
    pub tasks: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            quality_floor: None,
            tasks: Vec::new(),
        }
    }

    /// Task count per level, levels 1..=5 always present.
    pub fn level_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts: BTreeMap<u8, usize> = (1..=5).map(|l| (l, 0)).collect();
        for e in &self.tasks {
            *counts.entry(e.level).or_default() += 1;
        }
        counts
    }

    /// Indices into `tasks`, grouped by level.
    pub fn level_index(&self) -> BTreeMap<u8, Vec<usize>> {
        let mut index: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.tasks.iter().enumerate() {
            index.entry(e.level).or_default().push(i);
        }
        index
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = fs::read_to_string(path).map_err(|e| TaskError::io(path, e))?;
        parse_with_policy(&text, KeyPolicy::Strict)
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| TaskError::io(dir, e))?;
        }
        let text = toml::to_string_pretty(self).expect("manifests always serialize");
        fs::write(path, text).map_err(|e| TaskError::io(path, e))
    }

    /// Loads every task, in manifest order. Fails if an entry's recorded
    /// level disagrees with the task file.
    pub fn load_tasks(&self, manifest_path: &Path, policy: KeyPolicy) -> Result<Vec<TaskSpec>, TaskError> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        self.tasks
            .iter()
            .map(|e| {
                let task = load_task_with(&base.join(&e.path), policy, Vocabulary::builtin())?;
                if task.level != e.level {
                    return Err(TaskError::schema(
                        "level",
                        format!("manifest says {} but {} is level {}", e.level, task.task_id, task.level),
                    ));
                }
                Ok(task)
            })
            .collect()
    }
}
