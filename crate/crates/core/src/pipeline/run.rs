use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ledger::{IterationRecord, IterationStatus, LedgerRecord, Metrics, RunLedger, Stage1Record};
use super::store::Store;
use super::{PipelineError, RunConfig};
use crate::corpus::{build_curriculum, generate_corpus, CurriculumDataset, ProofTree, Triplet};
use crate::dpo::{dpo_fit, DpoBatchStats};
use crate::hashing::derive_seed;
use crate::kernel::ProofState;
use crate::pairing::{filter_and_pair, PreferencePair};
use crate::policy::{regressor_fit, sft_fit, ScoreRegressor, TacticPolicy};
use crate::scoring::{
    bucket_states, fgps_subset, generator_score_remainder, search_training_rows, ScoredCandidateSet,
    ScoringConfig,
};
use crate::search::{pass_at_k_from_log, run_attempts, AttemptConfig, AttemptRecord};

/// File names inside a run directory.
pub mod paths {
    pub const CONFIG: &str = "config.toml";
    pub const CORPUS: &str = "corpus.jsonl";
    pub const HELDOUT: &str = "heldout.jsonl";
    pub const SFT_LOG: &str = "train/sft.tsv";
    pub const METRICS: &str = "metrics.tsv";
    pub const CURVE: &str = "curve.tsv";

    pub fn curriculum(n: u32) -> String {
        format!("curriculum/{n}.jsonl")
    }
    pub fn policy(n: u32) -> String {
        format!("checkpoints/policy_{n}.ckpt")
    }
    pub fn scorer(n: u32) -> String {
        format!("checkpoints/scorer_{n}.ckpt")
    }
    pub fn search_scores(n: u32) -> String {
        format!("scores/{n}/{n}.search.jsonl")
    }
    pub fn scores(n: u32) -> String {
        format!("scores/{n}/{n}.jsonl")
    }
    pub fn pairs(n: u32) -> String {
        format!("pairs/{n}.jsonl")
    }
    pub fn regressor_log(n: u32) -> String {
        format!("train/regressor_{n}.tsv")
    }
    pub fn dpo_log(n: u32) -> String {
        format!("train/dpo_{n}.tsv")
    }
    pub fn attempts(n: u32) -> String {
        format!("attempts/policy_{n}.jsonl")
    }
}

// Seed derivation paths, one per random stage.
const SEED_CORPUS: u64 = 1;
const SEED_SPLIT: u64 = 2;
const SEED_SCORE: u64 = 3;
const SEED_GENERATOR: u64 = 4;
const SEED_EVAL: u64 = 5;

const SPLIT: &str = "heldout";

fn metric_key(k: u32) -> String {
    format!("{SPLIT}/pass@{k}")
}

/// pass@k of one checkpoint on the held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub checkpoint: u32,
    pub theorems: usize,
    pub pass: Vec<(u32, f64)>,
}

impl MetricsRow {
    pub fn pass_at(&self, k: u32) -> Option<f64> {
        self.pass.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

/// A run directory plus its resolved configuration.
pub struct Run {
    pub config: RunConfig,
    pub store: Store,
    pool: rayon::ThreadPool,
}

impl Run {
    fn new(dir: &Path, config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        Ok(Run {
            config,
            store: Store::new(dir),
            pool,
        })
    }

    /// Starts a fresh run in `dir` and persists the config. Refuses a
    /// directory that already holds a ledger.
    pub fn create(dir: &Path, config: RunConfig) -> Result<Self, PipelineError> {
        let run = Run::new(dir, config)?;
        if run.store.exists(super::LEDGER_FILE) {
            return Err(PipelineError::Config(format!(
                "{} already holds a run",
                dir.display()
            )));
        }
        run.store.write(paths::CONFIG, run.config.to_toml().as_bytes())?;
        Ok(run)
    }

    /// Opens an existing run from its persisted config.
    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let config = RunConfig::load(&dir.join(paths::CONFIG))?;
        Run::new(dir, config)
    }

    /// Opens `dir` for a single stage. A given config must agree with the
    /// persisted one; with neither, defaults are used and persisted.
    pub fn attach(dir: &Path, config: Option<RunConfig>) -> Result<Self, PipelineError> {
        let existing = dir.join(paths::CONFIG);
        match (config, existing.exists()) {
            (Some(c), true) => {
                let run = Run::open(dir)?;
                if run.config != c {
                    return Err(PipelineError::Config(format!(
                        "config differs from the one stored in {}",
                        dir.display()
                    )));
                }
                Ok(run)
            }
            (None, true) => Run::open(dir),
            (c, false) => {
                let run = Run::new(dir, c.unwrap_or_default())?;
                run.store.write(paths::CONFIG, run.config.to_toml().as_bytes())?;
                Ok(run)
            }
        }
    }

    fn seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.config.seed, path)
    }

    fn clock(&self, start: Instant) -> Option<f64> {
        self.config
            .record_wall_clock
            .then(|| start.elapsed().as_secs_f64())
    }

    fn digests<S: AsRef<str>>(&self, files: &[S]) -> Result<BTreeMap<String, String>, PipelineError> {
        files
            .iter()
            .map(|f| Ok((f.as_ref().to_string(), self.store.digest(f.as_ref())?)))
            .collect()
    }

    // ---- checkpoints ----

    pub fn save_policy(&self, n: u32, policy: &TacticPolicy) -> Result<(), PipelineError> {
        self.store.write(&paths::policy(n), &policy.to_bytes()).map(drop)
    }

    pub fn load_policy(&self, n: u32) -> Result<TacticPolicy, PipelineError> {
        let rel = paths::policy(n);
        if !self.store.exists(&rel) {
            return Err(PipelineError::MissingCheckpoint(rel));
        }
        TacticPolicy::from_bytes(&self.store.read(&rel)?)
            .map_err(|source| PipelineError::Checkpoint { path: rel, source })
    }

    fn save_scorer(&self, n: u32, g: &ScoreRegressor) -> Result<(), PipelineError> {
        self.store.write(&paths::scorer(n), &g.to_bytes()).map(drop)
    }

    /// `G_n`; `G_0` is a fresh zero-weight regressor.
    pub fn load_scorer(&self, n: u32) -> Result<ScoreRegressor, PipelineError> {
        if n == 0 {
            return Ok(ScoreRegressor::zeros("scorer_0", self.config.policy.feature_dim));
        }
        let rel = paths::scorer(n);
        if !self.store.exists(&rel) {
            return Err(PipelineError::MissingCheckpoint(rel));
        }
        ScoreRegressor::from_bytes(&self.store.read(&rel)?)
            .map_err(|source| PipelineError::Checkpoint { path: rel, source })
    }

    // ---- stage 1 ----

    /// Generates the corpus and splits off the held-out theorems by a seeded
    /// shuffle of ids. Returns `(train, heldout)`.
    pub fn gen_corpus(&self) -> Result<(Vec<ProofTree>, Vec<ProofTree>), PipelineError> {
        let c = &self.config.corpus;
        let trees = generate_corpus(self.seed(&[SEED_CORPUS]), c.size, c.max_depth)?;
        let mut ids: Vec<u64> = trees.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed(&[SEED_SPLIT])));
        let n_heldout = (trees.len() as f64 * c.heldout_fraction).round() as usize;
        let heldout_ids: HashSet<u64> = ids[..n_heldout].iter().copied().collect();
        let (heldout, train): (Vec<_>, Vec<_>) =
            trees.into_iter().partition(|t| heldout_ids.contains(&t.id));
        self.store.write_jsonl(paths::CORPUS, &train)?;
        self.store.write_jsonl(paths::HELDOUT, &heldout)?;
        Ok((train, heldout))
    }

    /// Buckets the training corpus and writes one file per difficulty.
    pub fn curriculum(&self) -> Result<CurriculumDataset, PipelineError> {
        let trees: Vec<ProofTree> = self.store.read_jsonl(paths::CORPUS)?;
        let data = build_curriculum(&trees)?;
        for (n, bucket) in &data.buckets {
            self.store.write_jsonl(&paths::curriculum(*n), bucket)?;
        }
        Ok(data)
    }

    /// Difficulty levels with a bucket file, ascending.
    pub fn levels(&self) -> Vec<u32> {
        (1..=self.config.corpus.max_depth as u32)
            .filter(|&n| self.store.exists(&paths::curriculum(n)))
            .collect()
    }

    pub fn load_bucket(&self, n: u32) -> Result<Option<Vec<Triplet>>, PipelineError> {
        let rel = paths::curriculum(n);
        if !self.store.exists(&rel) {
            return Ok(None);
        }
        self.store.read_jsonl(&rel).map(Some)
    }

    pub fn load_curriculum(&self) -> Result<CurriculumDataset, PipelineError> {
        let mut data = CurriculumDataset::default();
        for n in self.levels() {
            if let Some(b) = self.load_bucket(n)? {
                data.buckets.insert(n, b);
            }
        }
        Ok(data)
    }

    /// Supervised fit of `P_0` on the whole curriculum. Returns the policy
    /// and its loss curve.
    pub fn sft(&self) -> Result<(TacticPolicy, Vec<f64>), PipelineError> {
        let data = self.load_curriculum()?;
        let triplets: Vec<Triplet> = data.iter().cloned().collect();
        let p = &self.config.policy;
        let init = TacticPolicy::zeros("policy_0", p.feature_dim, p.temperature);
        let (policy, losses) = sft_fit(&init, &triplets, &self.config.sft)?;
        self.save_policy(0, &policy)?;
        let rows: Vec<Vec<String>> = losses
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), l.to_string()])
            .collect();
        self.store.write_tsv(paths::SFT_LOG, &["epoch", "loss"], &rows)?;
        Ok((policy, losses))
    }

    /// Corpus, curriculum, `P_0`, and its held-out evaluation; appends the
    /// stage-1 ledger record.
    pub fn stage1_prepare(&self) -> Result<(CurriculumDataset, TacticPolicy), PipelineError> {
        let start = Instant::now();
        let (train, heldout) = self.gen_corpus()?;
        let data = self.curriculum()?;
        let (policy, losses) = self.pool.install(|| self.sft())?;
        let (_, metrics) = self.evaluate(0)?;

        let mut files = vec![
            paths::CORPUS.to_string(),
            paths::HELDOUT.to_string(),
            paths::policy(0),
            paths::SFT_LOG.to_string(),
            paths::attempts(0),
        ];
        files.extend(data.levels().map(paths::curriculum));
        let record = Stage1Record {
            train_theorems: train.len(),
            heldout_theorems: heldout.len(),
            buckets: data.buckets.iter().map(|(n, b)| (*n, b.len())).collect(),
            small_buckets: data.small_buckets(self.config.corpus.min_bucket_size),
            sft_loss_initial: losses[0],
            sft_loss_final: *losses.last().expect("loss history is non-empty"),
            files: self.digests(&files)?,
            metrics,
            wall_clock: self.clock(start),
        };
        let mut ledger = RunLedger::load(&self.store)?;
        ledger.append(&self.store, LedgerRecord::Stage1(record))?;
        Ok((data, policy))
    }

    // ---- stage 2 ----

    fn scoring_config(&self, n: u32) -> ScoringConfig {
        let s = &self.config.scoring;
        ScoringConfig {
            k: s.k,
            n_attempt: s.n_attempt,
            budget: self.config.scoring_budget(n),
            puct: s.puct,
        }
    }

    /// Scores bucket `n` with `P_{n-1}`: search on a subset, then `G_n`
    /// (warm-started from `G_{n-1}`) on the rest. Returns `G_n` and the
    /// sizes `(search-scored, all)`.
    pub fn score(&self, n: u32) -> Result<(ScoreRegressor, usize, usize), PipelineError> {
        let bucket = self
            .load_bucket(n)?
            .ok_or(PipelineError::Scoring(crate::scoring::ScoringError::EmptyBucket))?;
        let policy = self.load_policy(n - 1)?;
        let prev = self.load_scorer(n - 1)?;
        let cfg = self.scoring_config(n);
        let seed = self.seed(&[SEED_SCORE, n as u64]);

        let searched = self
            .pool
            .install(|| fgps_subset(&policy, &bucket, self.config.scoring.subset_size, &cfg, seed))?;
        self.store.write_jsonl(&paths::search_scores(n), &searched)?;

        let rows = search_training_rows(&searched);
        let (mut g, losses) = if rows.is_empty() {
            (prev, Vec::new())
        } else {
            regressor_fit(&prev, &rows, &self.config.regressor)?
        };
        g.model_id = format!("scorer_{n}");
        self.save_scorer(n, &g)?;
        let log: Vec<Vec<String>> = losses
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), l.to_string()])
            .collect();
        self.store.write_tsv(&paths::regressor_log(n), &["epoch", "loss"], &log)?;

        let all = if searched.len() == bucket_states(&bucket).len() {
            searched.clone()
        } else {
            let gseed = self.seed(&[SEED_GENERATOR, n as u64]);
            self.pool.install(|| {
                generator_score_remainder(&g, &policy, &bucket, &searched, self.config.scoring.k, gseed)
            })?
        };
        self.store.write_jsonl(&paths::scores(n), &all)?;
        Ok((g, searched.len(), all.len()))
    }

    /// Filters and pairs the scored candidates of iteration `n`.
    pub fn pair(&self, n: u32) -> Result<Vec<PreferencePair>, PipelineError> {
        let scored: Vec<ScoredCandidateSet> = self.store.read_jsonl(&paths::scores(n))?;
        let pairs = filter_and_pair(&scored, &self.config.pairing)?;
        self.store.write_jsonl(&paths::pairs(n), &pairs)?;
        Ok(pairs)
    }

    /// Scoring and pairing for iteration `n`.
    pub fn stage2_generate(&self, n: u32) -> Result<(ScoreRegressor, Vec<PreferencePair>), PipelineError> {
        let (g, _, _) = self.score(n)?;
        let pairs = self.pair(n)?;
        Ok((g, pairs))
    }

    // ---- stage 3 ----

    /// DPO from `P_{n-1}` (also the reference) on `pairs/<n>.jsonl`. With no
    /// pairs, `P_{n-1}` is carried forward.
    pub fn dpo(&self, n: u32) -> Result<(TacticPolicy, Vec<DpoBatchStats>), PipelineError> {
        let pairs: Vec<PreferencePair> = self.store.read_jsonl(&paths::pairs(n))?;
        let reference = self.load_policy(n - 1)?;
        let (policy, stats) = if pairs.is_empty() {
            (reference.clone(), Vec::new())
        } else {
            dpo_fit(&reference, &reference, &pairs, &self.config.dpo)?
        };
        let policy = policy.with_id(format!("policy_{n}"));
        self.save_policy(n, &policy)?;
        let rows: Vec<Vec<String>> = stats
            .iter()
            .enumerate()
            .map(|(i, s)| {
                vec![
                    i.to_string(),
                    s.loss.to_string(),
                    s.margin.to_string(),
                    s.accuracy.to_string(),
                    s.grad_norm.to_string(),
                ]
            })
            .collect();
        self.store.write_tsv(
            &paths::dpo_log(n),
            &["step", "loss", "margin", "accuracy", "grad_norm"],
            &rows,
        )?;
        Ok((policy, stats))
    }

    fn carry_forward(&self, n: u32) -> Result<(), PipelineError> {
        let p = self.load_policy(n - 1)?.with_id(format!("policy_{n}"));
        self.save_policy(n, &p)?;
        let mut g = self.load_scorer(n - 1)?;
        g.model_id = format!("scorer_{n}");
        self.save_scorer(n, &g)
    }

    /// One curriculum iteration on bucket `n`, evaluated on the held-out
    /// split.
    pub fn iteration(&self, n: u32) -> Result<IterationRecord, PipelineError> {
        let start = Instant::now();
        let mut files = vec![paths::policy(n), paths::scorer(n)];
        let mut record = IterationRecord {
            n,
            status: IterationStatus::EmptyBucket,
            scored_states: 0,
            search_states: 0,
            pairs: 0,
            dpo_first: None,
            dpo_last: None,
            dpo_steps: 0,
            files: BTreeMap::new(),
            metrics: Metrics::new(),
            wall_clock: None,
        };
        if self.store.exists(&paths::curriculum(n)) {
            let (_, searched, all) = self.score(n)?;
            let pairs = self.pair(n)?;
            let (_, stats) = self.dpo(n)?;
            record.status = if pairs.is_empty() {
                IterationStatus::NoPairs
            } else {
                IterationStatus::Trained
            };
            record.search_states = searched;
            record.scored_states = all;
            record.pairs = pairs.len();
            record.dpo_first = stats.first().copied();
            record.dpo_last = stats.last().copied();
            record.dpo_steps = stats.len();
            files.extend([
                paths::search_scores(n),
                paths::scores(n),
                paths::regressor_log(n),
                paths::pairs(n),
                paths::dpo_log(n),
            ]);
        } else {
            self.carry_forward(n)?;
        }
        let (_, metrics) = self.evaluate(n)?;
        files.push(paths::attempts(n));
        record.metrics = metrics;
        record.files = self.digests(&files)?;
        record.wall_clock = self.clock(start);
        Ok(record)
    }

    /// Iterations `1..=I` in ascending difficulty, one ledger record each.
    /// Returns the final policy.
    pub fn stage3_iterate(&self) -> Result<(TacticPolicy, RunLedger), PipelineError> {
        let mut ledger = RunLedger::load(&self.store)?;
        let mut last = 0;
        let mut prev = self.load_policy(0).and_then(|_| self.pass_at_1(0))?;
        for n in 1..=self.config.iterate.iterations {
            let record = self.iteration(n)?;
            let now = record.metrics[&metric_key(1)];
            ledger.append(&self.store, LedgerRecord::Iteration(record))?;
            last = n;
            if self.config.iterate.early_stop && now <= prev {
                ledger.append(
                    &self.store,
                    LedgerRecord::EarlyStop {
                        after: n,
                        pass_at_1: now,
                        previous: prev,
                    },
                )?;
                break;
            }
            prev = now;
        }
        Ok((self.load_policy(last)?, ledger))
    }

    // ---- evaluation ----

    fn heldout_theorems(&self) -> Result<Vec<(u64, ProofState)>, PipelineError> {
        let trees: Vec<ProofTree> = self.store.read_jsonl(paths::HELDOUT)?;
        Ok(trees.into_iter().map(|t| (t.id, t.root().clone())).collect())
    }

    fn metrics(&self, log: &[AttemptRecord], ids: &[u64]) -> Metrics {
        let mut ks = self.config.eval.ks.clone();
        ks.push(1);
        ks.into_iter()
            .map(|k| (metric_key(k), pass_at_k_from_log(log, ids, k)))
            .collect()
    }

    /// Best-first attempts of `P_n` on the held-out theorems, logged to
    /// `attempts/policy_<n>.jsonl`. The evaluation seed does not depend on
    /// `n`, so checkpoints are compared on the same draws.
    pub fn evaluate(&self, n: u32) -> Result<(Vec<AttemptRecord>, Metrics), PipelineError> {
        let policy = self.load_policy(n)?;
        let theorems = self.heldout_theorems()?;
        let cfg = AttemptConfig {
            budget: self.config.eval.budget,
            candidates_per_node: self.config.eval.candidates_per_node,
            record_wall_clock: self.config.record_wall_clock,
        };
        let k = self.config.eval_attempts();
        let seed = self.seed(&[SEED_EVAL]);
        let log = self
            .pool
            .install(|| run_attempts(&policy, &theorems, k, &cfg, seed));
        self.store.write_jsonl(&paths::attempts(n), &log)?;
        let ids: Vec<u64> = theorems.iter().map(|t| t.0).collect();
        let metrics = self.metrics(&log, &ids);
        Ok((log, metrics))
    }

    fn pass_at_1(&self, n: u32) -> Result<f64, PipelineError> {
        let ids: Vec<u64> = self.heldout_theorems()?.iter().map(|t| t.0).collect();
        let log = self.attempt_log(n)?;
        Ok(pass_at_k_from_log(&log, &ids, 1))
    }

    fn attempt_log(&self, n: u32) -> Result<Vec<AttemptRecord>, PipelineError> {
        if self.store.exists(&paths::attempts(n)) {
            self.store.read_jsonl(&paths::attempts(n))
        } else {
            self.evaluate(n).map(|(log, _)| log)
        }
    }

    /// Checkpoint indices present on disk, ascending.
    pub fn checkpoints(&self) -> Vec<u32> {
        (0..=self.config.iterate.iterations)
            .filter(|&n| self.store.exists(&paths::policy(n)))
            .collect()
    }

    /// pass@k per checkpoint from the attempt logs (evaluating where a log
    /// is missing). Writes `metrics.tsv` with one row per checkpoint and
    /// `curve.tsv` with one row per iteration.
    pub fn evaluate_and_report(&self, checkpoints: &[u32]) -> Result<Vec<MetricsRow>, PipelineError> {
        let ids: Vec<u64> = self.heldout_theorems()?.iter().map(|t| t.0).collect();
        let ks = self.config.eval.ks.clone();
        let mut rows = Vec::new();
        for &n in checkpoints {
            if !self.store.exists(&paths::policy(n)) {
                return Err(PipelineError::MissingCheckpoint(paths::policy(n)));
            }
            let log = self.attempt_log(n)?;
            let pass = ks.iter().map(|&k| (k, pass_at_k_from_log(&log, &ids, k))).collect();
            rows.push(MetricsRow {
                checkpoint: n,
                theorems: ids.len(),
                pass,
            });
        }

        let mut header = vec!["checkpoint".to_string(), "split".into(), "theorems".into()];
        header.extend(ks.iter().map(|k| format!("pass@{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut line = vec![r.checkpoint.to_string(), SPLIT.into(), r.theorems.to_string()];
                line.extend(r.pass.iter().map(|(_, v)| format!("{v:.6}")));
                line
            })
            .collect();
        self.store.write_tsv(paths::METRICS, &header, &table)?;

        let base = rows.iter().find(|r| r.checkpoint == 0).and_then(|r| r.pass.first());
        let curve: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.checkpoint > 0)
            .map(|r| {
                let (k, v) = r.pass[0];
                let delta = base.filter(|b| b.0 == k).map(|b| v - b.1);
                vec![
                    r.checkpoint.to_string(),
                    format!("{v:.6}"),
                    delta.map(|d| format!("{d:.6}")).unwrap_or_default(),
                ]
            })
            .collect();
        let first = format!("pass@{}", ks[0]);
        self.store
            .write_tsv(paths::CURVE, &["iteration", &first, "delta_vs_p0"], &curve)?;
        Ok(rows)
    }

    /// Stages 1 to 3 and the report.
    pub fn run_all(&self) -> Result<Vec<MetricsRow>, PipelineError> {
        self.stage1_prepare()?;
        self.stage3_iterate()?;
        self.evaluate_and_report(&self.checkpoints())
    }
}
