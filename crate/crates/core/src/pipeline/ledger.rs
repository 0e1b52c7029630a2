use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::Store;
use super::PipelineError;
use crate::dpo::DpoBatchStats;

pub const LEDGER_FILE: &str = "ledger.jsonl";

/// Relative path to SHA-256 hex digest.
pub type FileDigests = BTreeMap<String, String>;

/// Metric name (`<split>/pass@<k>`) to value.
pub type Metrics = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerRecord {
    Stage1(Stage1Record),
    Iteration(IterationRecord),
    EarlyStop { after: u32, pass_at_1: f64, previous: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub train_theorems: usize,
    pub heldout_theorems: usize,
    /// `(difficulty, triplet count)`, ascending.
    pub buckets: Vec<(u32, usize)>,
    /// Levels below the configured minimum bucket size.
    pub small_buckets: Vec<u32>,
    pub sft_loss_initial: f64,
    pub sft_loss_final: f64,
    pub files: FileDigests,
    pub metrics: Metrics,
    pub wall_clock: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationStatus {
    Trained,
    /// Pairing produced nothing; the previous policy is carried forward.
    NoPairs,
    /// No bucket at this difficulty; the previous policy is carried forward.
    EmptyBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: u32,
    pub status: IterationStatus,
    pub scored_states: usize,
    pub search_states: usize,
    pub pairs: usize,
    pub dpo_first: Option<DpoBatchStats>,
    pub dpo_last: Option<DpoBatchStats>,
    pub dpo_steps: usize,
    pub files: FileDigests,
    pub metrics: Metrics,
    pub wall_clock: Option<f64>,
}

impl LedgerRecord {
    pub fn files(&self) -> Option<&FileDigests> {
        match self {
            LedgerRecord::Stage1(r) => Some(&r.files),
            LedgerRecord::Iteration(r) => Some(&r.files),
            LedgerRecord::EarlyStop { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLedger {
    pub records: Vec<LedgerRecord>,
}

impl RunLedger {
    pub fn load(store: &Store) -> Result<Self, PipelineError> {
        if !store.exists(LEDGER_FILE) {
            return Ok(RunLedger::default());
        }
        Ok(RunLedger {
            records: store.read_jsonl(LEDGER_FILE)?,
        })
    }

    pub fn append(&mut self, store: &Store, record: LedgerRecord) -> Result<(), PipelineError> {
        store.append_jsonl(LEDGER_FILE, &record)?;
        self.records.push(record);
        Ok(())
    }

    pub fn iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter_map(|r| match r {
            LedgerRecord::Iteration(it) => Some(it),
            _ => None,
        })
    }

    /// Checks that every referenced file exists with the recorded digest.
    pub fn verify(&self, store: &Store) -> Result<(), PipelineError> {
        for files in self.records.iter().filter_map(LedgerRecord::files) {
            for (rel, want) in files {
                if !store.exists(rel) {
                    return Err(PipelineError::MissingArtifact(rel.clone()));
                }
                let got = store.digest(rel)?;
                if &got != want {
                    return Err(PipelineError::DigestMismatch(rel.clone()));
                }
            }
        }
        Ok(())
    }
}
