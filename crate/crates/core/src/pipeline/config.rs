use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dpo::DpoConfig;
use crate::pairing::PairingConfig;
use crate::policy::{BatchMode, FitConfig, DEFAULT_FEATURE_DIM};
use crate::search::SearchBudget;

/// Every knob of a run. Loaded from TOML; omitted keys take the defaults
/// below, and the fully resolved config is written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for scoring and evaluation. Output does not depend
    /// on this.
    pub threads: usize,
    /// Write elapsed seconds into logs and the ledger. Makes digests
    /// run-dependent.
    pub record_wall_clock: bool,
    pub corpus: CorpusSection,
    pub policy: PolicySection,
    pub sft: FitConfig,
    pub scoring: ScoringSection,
    pub regressor: FitConfig,
    pub pairing: PairingConfig,
    pub dpo: DpoConfig,
    pub iterate: IterateSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub size: usize,
    pub max_depth: usize,
    pub heldout_fraction: f64,
    /// Buckets with fewer triplets are flagged in the ledger. They are
    /// still iterated.
    pub min_bucket_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub feature_dim: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    /// Policy draws per state.
    pub k: usize,
    pub n_attempt: u32,
    /// States scored by search per bucket; the rest go to the regressor.
    pub subset_size: usize,
    pub puct: f64,
    /// Budget of one MCTS attempt in the first iteration.
    pub budget: SearchBudget,
    /// Fractional growth of the expansion limit per later iteration.
    pub expansion_growth: f64,
    /// Seconds added to the wall-clock limit per later iteration.
    pub wall_clock_growth_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateSection {
    pub iterations: u32,
    /// Stop after an iteration whose held-out pass@1 does not improve.
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// pass@k values to report; attempts per theorem is the largest.
    pub ks: Vec<u32>,
    pub candidates_per_node: usize,
    pub budget: SearchBudget,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            record_wall_clock: false,
            corpus: CorpusSection::default(),
            policy: PolicySection::default(),
            sft: FitConfig {
                epochs: 60,
                learning_rate: 0.5,
                batch: BatchMode::Full,
            },
            scoring: ScoringSection::default(),
            regressor: FitConfig {
                epochs: 30,
                learning_rate: 1.0,
                batch: BatchMode::Full,
            },
            pairing: PairingConfig::default(),
            dpo: DpoConfig {
                learning_rate: 0.5,
                batch: BatchMode::Mini { size: 16, seed: 0 },
                ..DpoConfig::default()
            },
            iterate: IterateSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            size: 2000,
            max_depth: 6,
            heldout_fraction: 0.2,
            min_bucket_size: 50,
        }
    }
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            feature_dim: DEFAULT_FEATURE_DIM,
            temperature: 1.0,
        }
    }
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection {
            k: 32,
            n_attempt: 10,
            subset_size: 2000,
            puct: 1.0,
            budget: SearchBudget::new(1000, 10, 60.0, 2),
            expansion_growth: 0.5,
            wall_clock_growth_secs: 30.0,
        }
    }
}

impl Default for IterateSection {
    fn default() -> Self {
        IterateSection {
            iterations: 4,
            early_stop: false,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: vec![1],
            candidates_per_node: 8,
            budget: SearchBudget::new(1000, 10, 300.0, 8),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), PipelineError> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(msg.to_string()))
    }
}

fn check_fit(f: &FitConfig, name: &str) -> Result<(), PipelineError> {
    check(
        f.learning_rate >= 0.0 && f.learning_rate.is_finite(),
        &format!("{name}.learning_rate must be a non-negative number"),
    )?;
    if let BatchMode::Mini { size, .. } = f.batch {
        check(size > 0, &format!("{name}.batch size must be positive"))?;
    }
    Ok(())
}

/// Overlays `top` on `base`, recursing into tables present in both.
pub fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        check(self.threads >= 1, "threads must be at least 1")?;
        check(self.corpus.size >= 1, "corpus.size must be positive")?;
        check(self.corpus.max_depth >= 1, "corpus.max_depth must be positive")?;
        check(
            (0.0..1.0).contains(&self.corpus.heldout_fraction),
            "corpus.heldout_fraction must be in [0, 1)",
        )?;
        check(self.policy.feature_dim >= 2, "policy.feature_dim must be at least 2")?;
        check(
            self.policy.temperature > 0.0 && self.policy.temperature.is_finite(),
            "policy.temperature must be positive",
        )?;
        check_fit(&self.sft, "sft")?;
        check_fit(&self.regressor, "regressor")?;
        check(self.scoring.k >= 1, "scoring.k must be positive")?;
        check(self.scoring.n_attempt >= 1, "scoring.n_attempt must be positive")?;
        check(self.scoring.subset_size >= 1, "scoring.subset_size must be positive")?;
        check(self.scoring.puct >= 0.0, "scoring.puct must be non-negative")?;
        self.scoring
            .budget
            .validate()
            .map_err(|e| PipelineError::Config(format!("scoring.budget: {e}")))?;
        check(
            self.scoring.expansion_growth >= 0.0 && self.scoring.wall_clock_growth_secs >= 0.0,
            "scoring growth must be non-negative",
        )?;
        self.pairing
            .validate()
            .map_err(|e| PipelineError::Config(format!("pairing: {e}")))?;
        self.dpo
            .validate()
            .map_err(|e| PipelineError::Config(format!("dpo: {e}")))?;
        check(!self.eval.ks.is_empty(), "eval.ks must not be empty")?;
        check(self.eval.ks.iter().all(|&k| k >= 1), "eval.ks must be positive")?;
        check(self.eval.candidates_per_node >= 1, "eval.candidates_per_node must be positive")?;
        self.eval
            .budget
            .validate()
            .map_err(|e| PipelineError::Config(format!("eval.budget: {e}")))?;
        Ok(())
    }

    /// Scoring budget for iteration `n` (1-based).
    pub fn scoring_budget(&self, n: u32) -> SearchBudget {
        self.scoring.budget.grown(
            n.saturating_sub(1),
            self.scoring.expansion_growth,
            self.scoring.wall_clock_growth_secs,
        )
    }

    pub fn eval_attempts(&self) -> u32 {
        self.eval.ks.iter().copied().max().unwrap_or(1)
    }

    /// Parses a config file. Keys it omits, including keys inside the
    /// sections it does give, keep the values of `RunConfig::default()`.
    pub fn from_toml(src: &str) -> Result<Self, PipelineError> {
        let user: toml::Table = toml::from_str(src).map_err(|e| PipelineError::Config(e.to_string()))?;
        Self::from_table(user)
    }

    /// Like `from_toml`, for an already parsed table.
    pub fn from_table(user: toml::Table) -> Result<Self, PipelineError> {
        let mut merged = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        merge(&mut merged, user);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let src = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&src)
    }
}
