//! Benchmark task schema, the five-level taxonomy and the on-disk formats.
//!
//! | Level | Content                                   | Target        |
//! |-------|-------------------------------------------|---------------|
//! | 1     | bare pipeline construction                | none          |
//! | 2     | one required acceleration method          | none          |
//! | 3     | a combination of methods                  | none          |
//! | 4     | free acceleration with a speedup floor    | `U >= U_req`  |
//! | 5     | free acceleration with a latency ceiling  | `tau <= tau_max` |
//!
//! Levels 4 and 5 additionally bound the relative quality loss by the task's
//! `quality_threshold`.

mod io;
mod types;
mod vocabulary;

pub use io::{
    load_task, load_task_with, parse_task, save_task, task_to_string, validate_task, KeyPolicy, Manifest,
    ManifestEntry, TaskError,
};
pub use types::*;
pub use vocabulary::{MethodSpec, ParamKind, ParamSpec, Vocabulary};
