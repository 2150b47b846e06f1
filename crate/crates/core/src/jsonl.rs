//! Append-only JSON-lines files.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Thread-safe appender; each record becomes one line, flushed on write.
#[derive(Debug)]
pub struct JsonlWriter<T> {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
    _t: PhantomData<fn(&T)>,
}

impl<T: Serialize> JsonlWriter<T> {
    /// Creates or truncates `path`.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Self::with_file(path, File::create(path)?)
    }

    pub fn append_to(path: &Path) -> std::io::Result<Self> {
        Self::with_file(path, OpenOptions::new().create(true).append(true).open(path)?)
    }

    fn with_file(path: &Path, f: File) -> std::io::Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(f)),
            _t: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &T) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
