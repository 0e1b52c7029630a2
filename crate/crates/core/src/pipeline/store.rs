use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::PipelineError;

/// A run directory. Paths are given relative to it; every read is logged so
/// tests can check which artifacts a stage touched.
pub struct Store {
    root: PathBuf,
    reads: Mutex<Vec<String>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store {
            root: root.into(),
            reads: Mutex::new(Vec::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    /// Relative paths read so far, in order.
    pub fn reads(&self) -> Vec<String> {
        self.reads.lock().expect("read log").clone()
    }

    pub fn clear_reads(&self) {
        self.reads.lock().expect("read log").clear();
    }

    /// Writes `bytes` to `rel` (via a temporary file) and returns their
    /// SHA-256 digest.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<String, PipelineError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(sha256_hex(bytes))
    }

    pub fn read(&self, rel: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.path(rel);
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(rel.to_string()));
        }
        self.reads.lock().expect("read log").push(rel.to_string());
        fs::read(&path).map_err(|e| PipelineError::io(&path, e))
    }

    pub fn digest(&self, rel: &str) -> Result<String, PipelineError> {
        let path = self.path(rel);
        fs::read(&path)
            .map(|b| sha256_hex(&b))
            .map_err(|e| PipelineError::io(&path, e))
    }

    pub fn write_jsonl<T: Serialize>(&self, rel: &str, rows: &[T]) -> Result<String, PipelineError> {
        let mut buf = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut buf, r).map_err(|e| PipelineError::Format(e.to_string()))?;
            buf.push(b'\n');
        }
        self.write(rel, &buf)
    }

    pub fn read_jsonl<T: DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>, PipelineError> {
        let bytes = self.read(rel)?;
        BufReader::new(bytes.as_slice())
            .lines()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|(i, line)| {
                let line = line.map_err(|e| PipelineError::io(&self.path(rel), e))?;
                serde_json::from_str(&line)
                    .map_err(|e| PipelineError::Format(format!("{rel}:{}: {e}", i + 1)))
            })
            .collect()
    }

    /// Appends one JSON line; the ledger's only write path.
    pub fn append_jsonl<T: Serialize>(&self, rel: &str, row: &T) -> Result<(), PipelineError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let mut line = serde_json::to_vec(row).map_err(|e| PipelineError::Format(e.to_string()))?;
        line.push(b'\n');
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| PipelineError::io(&path, e))?;
        f.write_all(&line).map_err(|e| PipelineError::io(&path, e))
    }

    /// Tab-separated table with a header row.
    pub fn write_tsv(&self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String, PipelineError> {
        let mut out = header.join("\t");
        out.push('\n');
        for r in rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        self.write(rel, out.as_bytes())
    }
}
