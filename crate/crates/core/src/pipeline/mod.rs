//! End-to-end runs: corpus and SFT, then scored curriculum iterations of
//! pairing and DPO, then held-out evaluation.
//!
//! A run lives in one directory:
//!
//! ```text
//! config.toml                   resolved configuration
//! corpus.jsonl, heldout.jsonl   training and held-out proof trees
//! curriculum/<n>.jsonl          triplets of difficulty n
//! checkpoints/policy_<n>.ckpt   P_n
//! checkpoints/scorer_<n>.ckpt   G_n
//! scores/<n>/<n>.search.jsonl   search-scored subset of bucket n
//! scores/<n>/<n>.jsonl          every state of bucket n, scored
//! pairs/<n>.jsonl               preference pairs of iteration n
//! train/*.tsv                   training curves
//! attempts/policy_<n>.jsonl     held-out attempt log of P_n
//! metrics.tsv, curve.tsv        pass@k per checkpoint
//! ledger.jsonl                  one record per stage, with file digests
//! ```

mod config;
mod ledger;
mod run;
mod store;

use std::path::{Path, PathBuf};

pub use config::{merge, CorpusSection, EvalSection, IterateSection, PolicySection, RunConfig, ScoringSection};
pub use ledger::{
    FileDigests, IterationRecord, IterationStatus, LedgerRecord, Metrics, RunLedger, Stage1Record,
    LEDGER_FILE,
};
pub use run::{paths, MetricsRow, Run};
pub use store::{sha256_hex, Store};

use crate::corpus::CorpusError;
use crate::dpo::DpoError;
use crate::pairing::PairingError;
use crate::policy::{CheckpointError, PolicyError};
use crate::scoring::ScoringError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record: {0}")]
    Format(String),
    #[error("missing artifact {0}")]
    MissingArtifact(String),
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(String),
    #[error("{0} does not match its ledger digest")]
    DigestMismatch(String),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        source: CheckpointError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Dpo(#[from] DpoError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}
