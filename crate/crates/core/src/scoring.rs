//! Fine-grained preference scoring: a candidate tactic's score is the
//! fraction of seeded MCTS attempts that finish the proof from the state it
//! leads to. A fitted regressor scores the states that search skipped.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Triplet;
use crate::hashing::derive_seed;
use crate::kernel::{KernelError, ProofState, Tactic};
use crate::policy::{sample_candidates, Candidate, PolicyError, ScoreRegressor, TacticPolicy};
use crate::search::{Evaluator, Mcts, MctsConfig, SearchBudget};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("bucket has no states")]
    EmptyBucket,
    #[error("score generator has not been fitted")]
    UnfittedRegressor,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Search,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub tactic: Tactic,
    pub score: f64,
    pub provenance: Provenance,
    /// Search counts; both zero for generator entries.
    pub n_success: u32,
    pub n_attempt: u32,
    /// How many of the `k` policy draws produced this tactic.
    pub multiplicity: u32,
}

/// Scored candidates at one bucket state. `index` is the state's position
/// among the bucket's distinct states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidateSet {
    pub index: usize,
    pub theorem: u64,
    pub state: ProofState,
    pub entries: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreRecord {
    pub n_success: u32,
    pub n_attempt: u32,
    /// The tactic closed every goal, so no search ran.
    pub immediate: bool,
}

impl ScoreRecord {
    pub fn score(&self) -> f64 {
        self.n_success as f64 / self.n_attempt as f64
    }
}

/// Distinct states of a bucket in first-occurrence order, each with the
/// theorem it was first seen in.
pub fn bucket_states(bucket: &[Triplet]) -> Vec<(u64, ProofState)> {
    let mut seen = BTreeSet::new();
    bucket
        .iter()
        .filter(|t| seen.insert(t.state.goals_key()))
        .map(|t| (t.theorem, ProofState::new(t.state.goals.clone())))
        .collect()
}

/// Scores `tactic` at `state` by `n_attempt` MCTS attempts from the
/// successor; attempt `j` is seeded with `seed ^ j`.
pub fn fgps_score(
    policy: &TacticPolicy,
    state: &ProofState,
    tactic: &Tactic,
    n_attempt: u32,
    budget: SearchBudget,
    seed: u64,
) -> Result<ScoreRecord, ScoringError> {
    let mcts = MctsConfig::default();
    fgps_score_with(&mut Evaluator::new(policy), state, tactic, n_attempt, budget, mcts, seed)
}

pub fn fgps_score_with(
    evaluator: &mut Evaluator<'_>,
    state: &ProofState,
    tactic: &Tactic,
    n_attempt: u32,
    budget: SearchBudget,
    mcts: MctsConfig,
    seed: u64,
) -> Result<ScoreRecord, ScoringError> {
    if n_attempt == 0 {
        return Err(ScoringError::InvalidArgument("n_attempt must be positive".into()));
    }
    let next = state.apply(tactic)?;
    if next.is_proved() {
        return Ok(ScoreRecord {
            n_success: n_attempt,
            n_attempt,
            immediate: true,
        });
    }
    let start = ProofState::new(next.goals);
    let n_success = (0..n_attempt)
        .filter(|&j| {
            Mcts::new(evaluator, budget, mcts, seed ^ j as u64)
                .run(&start)
                .is_proved()
        })
        .count() as u32;
    Ok(ScoreRecord {
        n_success,
        n_attempt,
        immediate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Policy draws per state.
    pub k: usize,
    pub n_attempt: u32,
    pub budget: SearchBudget,
    pub puct: f64,
}

fn candidates(
    evaluator: &mut Evaluator<'_>,
    state: &ProofState,
    k: usize,
    seed: u64,
) -> Vec<Candidate> {
    let eval = evaluator.eval(state);
    if eval.actions.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_candidates(&eval, k, &mut rng).expect("action set is non-empty")
}

fn score_state(
    policy: &TacticPolicy,
    index: usize,
    theorem: u64,
    state: &ProofState,
    cfg: &ScoringConfig,
    seed: u64,
) -> Result<ScoredCandidateSet, ScoringError> {
    let mut ev = Evaluator::new(policy);
    let cands = candidates(&mut ev, state, cfg.k, derive_seed(seed, &[index as u64, 0]));
    let mut entries = Vec::with_capacity(cands.len());
    for c in cands {
        let base = derive_seed(seed, &[index as u64, 1, c.index as u64]);
        let mcts = MctsConfig { puct: cfg.puct };
        let rec = fgps_score_with(&mut ev, state, &c.tactic, cfg.n_attempt, cfg.budget, mcts, base)?;
        entries.push(ScoreEntry {
            tactic: c.tactic,
            score: rec.score(),
            provenance: Provenance::Search,
            n_success: rec.n_success,
            n_attempt: rec.n_attempt,
            multiplicity: c.multiplicity,
        });
    }
    Ok(ScoredCandidateSet {
        index,
        theorem,
        state: state.clone(),
        entries,
    })
}

/// Scores a seeded uniform subset of the bucket's distinct states by search.
/// A subset size above the number of states takes them all. Output is in
/// state-index order regardless of thread count.
pub fn fgps_subset(
    policy: &TacticPolicy,
    bucket: &[Triplet],
    subset_size: usize,
    cfg: &ScoringConfig,
    seed: u64,
) -> Result<Vec<ScoredCandidateSet>, ScoringError> {
    let states = bucket_states(bucket);
    if states.is_empty() {
        return Err(ScoringError::EmptyBucket);
    }
    if subset_size == 0 {
        return Err(ScoringError::InvalidArgument("subset size must be positive".into()));
    }
    let chosen = choose_subset(states.len(), subset_size, seed);
    chosen
        .par_iter()
        .map(|&i| {
            let (theorem, state) = &states[i];
            score_state(policy, i, *theorem, state, cfg, seed)
        })
        .collect()
}

/// Sorted indices of a seeded uniform sample without replacement.
pub fn choose_subset(len: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u64::MAX]));
    let mut chosen = index::sample(&mut rng, len, size.min(len)).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Completes `already` to cover every distinct bucket state, scoring the
/// missing states' sampled candidates with the regressor. Returns the union
/// in state-index order.
pub fn generator_score_remainder(
    reg: &ScoreRegressor,
    policy: &TacticPolicy,
    bucket: &[Triplet],
    already: &[ScoredCandidateSet],
    k: usize,
    seed: u64,
) -> Result<Vec<ScoredCandidateSet>, ScoringError> {
    if !reg.fitted {
        return Err(ScoringError::UnfittedRegressor);
    }
    let states = bucket_states(bucket);
    if states.is_empty() {
        return Err(ScoringError::EmptyBucket);
    }
    let done: HashMap<String, &ScoredCandidateSet> =
        already.iter().map(|s| (s.state.goals_key(), s)).collect();
    states
        .par_iter()
        .enumerate()
        .map(|(i, (theorem, state))| {
            if let Some(s) = done.get(&state.goals_key()) {
                return Ok((*s).clone());
            }
            let mut ev = Evaluator::new(policy);
            let cands = candidates(&mut ev, state, k, derive_seed(seed, &[i as u64, 0]));
            let eval = ev.eval(state);
            let entries = cands
                .into_iter()
                .map(|c| ScoreEntry {
                    score: reg.predict_features(&eval.actions.features[c.index]),
                    tactic: c.tactic,
                    provenance: Provenance::Generator,
                    n_success: 0,
                    n_attempt: 0,
                    multiplicity: c.multiplicity,
                })
                .collect();
            Ok(ScoredCandidateSet {
                index: i,
                theorem: *theorem,
                state: state.clone(),
                entries,
            })
        })
        .collect()
}

/// `(state, tactic, score)` rows of every search-scored entry.
pub fn search_training_rows(sets: &[ScoredCandidateSet]) -> Vec<(ProofState, Tactic, f64)> {
    sets.iter()
        .flat_map(|s| {
            s.entries
                .iter()
                .filter(|e| e.provenance == Provenance::Search)
                .map(move |e| (s.state.clone(), e.tactic.clone(), e.score))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_curriculum, generate_corpus};
    use crate::kernel::{parse_equation, Side};
    use crate::policy::{regressor_fit, BatchMode, FitConfig, DEFAULT_FEATURE_DIM};

    fn uniform() -> TacticPolicy {
        TacticPolicy::zeros("u", DEFAULT_FEATURE_DIM, 1.0)
    }

    fn budget() -> SearchBudget {
        SearchBudget::new(1000, 10, 60.0, 64)
    }

    fn cfg() -> ScoringConfig {
        ScoringConfig {
            k: 32,
            n_attempt: 10,
            budget: budget(),
            puct: 1.0,
        }
    }

    /// `c = a` under `c = a` and `c = b`: one hypothesis wins next step,
    /// the other leaves `b = a` with nothing applicable.
    fn fork() -> (ProofState, Tactic, Tactic) {
        let s: ProofState = "(state 0 (goal (hyps (h0 c a) (h1 c b)) c a))".parse().unwrap();
        let at = crate::kernel::Position { side: Side::Lhs, path: vec![] };
        let win = Tactic::ApplyHyp { name: "h0".into(), at: at.clone() };
        let lose = Tactic::ApplyHyp { name: "h1".into(), at };
        (s, win, lose)
    }

    #[test]
    fn win_and_dead_end_separate() {
        let (s, win, lose) = fork();
        let one_sim = SearchBudget::new(1, 10, 60.0, 1);
        for b in [one_sim, budget()] {
            let w = fgps_score(&uniform(), &s, &win, 10, b, 7).unwrap();
            let l = fgps_score(&uniform(), &s, &lose, 10, b, 7).unwrap();
            assert_eq!((w.score(), l.score()), (1.0, 0.0));
            assert_eq!((w.n_success, l.n_success), (10, 0));
        }
    }

    #[test]
    fn immediate_closure_skips_search() {
        let s = ProofState::single(parse_equation("a = a").unwrap());
        let r = fgps_score(&uniform(), &s, &Tactic::Refl, 10, budget(), 0).unwrap();
        assert!(r.immediate);
        assert_eq!(r.score(), 1.0);
    }

    #[test]
    fn inapplicable_tactic_errors() {
        let s = ProofState::single(parse_equation("a = b").unwrap());
        assert!(matches!(
            fgps_score(&uniform(), &s, &Tactic::Refl, 10, budget(), 0),
            Err(ScoringError::Kernel(_))
        ));
    }

    fn bucket() -> Vec<Triplet> {
        let trees = generate_corpus(5, 40, 4).unwrap();
        let cur = build_curriculum(&trees).unwrap();
        cur.bucket(2).to_vec()
    }

    #[test]
    fn subset_is_seeded_exact_and_deduplicated() {
        let b = bucket();
        let p = TacticPolicy::seeded("p", DEFAULT_FEATURE_DIM, 1.0, 1);
        let a = fgps_subset(&p, &b, 6, &cfg(), 3).unwrap();
        assert_eq!(a, fgps_subset(&p, &b, 6, &cfg(), 3).unwrap());
        assert_eq!(a.len(), 6.min(bucket_states(&b).len()));
        for set in &a {
            let n_actions = set.state.enumerate_tactics().len();
            assert!(set.entries.len() <= n_actions);
            assert_eq!(set.entries.iter().map(|e| e.multiplicity).sum::<u32>(), 32);
            let distinct: BTreeSet<String> = set.entries.iter().map(|e| e.tactic.to_string()).collect();
            assert_eq!(distinct.len(), set.entries.len());
            for e in &set.entries {
                assert_eq!(e.provenance, Provenance::Search);
                assert_eq!(e.score * e.n_attempt as f64, e.n_success as f64);
            }
        }
    }

    #[test]
    fn whole_bucket_when_subset_is_large() {
        let b = bucket();
        let n = bucket_states(&b).len();
        let a = fgps_subset(&uniform(), &b, 10_000, &cfg(), 0).unwrap();
        assert_eq!(a.iter().map(|s| s.index).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>());
        assert_eq!(fgps_subset(&uniform(), &[], 3, &cfg(), 0), Err(ScoringError::EmptyBucket));
    }

    #[test]
    fn remainder_covers_bucket() {
        let b = bucket();
        let p = uniform();
        let sc0 = fgps_subset(&p, &b, 4, &cfg(), 9).unwrap();
        let unfitted = ScoreRegressor::zeros("g", DEFAULT_FEATURE_DIM);
        assert_eq!(
            generator_score_remainder(&unfitted, &p, &b, &sc0, 32, 9),
            Err(ScoringError::UnfittedRegressor)
        );
        let fit = FitConfig {
            epochs: 20,
            learning_rate: 0.5,
            batch: BatchMode::Full,
        };
        let (g, _) = regressor_fit(&unfitted, &search_training_rows(&sc0), &fit).unwrap();
        let sc = generator_score_remainder(&g, &p, &b, &sc0, 32, 9).unwrap();
        assert_eq!(sc.len(), bucket_states(&b).len());
        for s in &sc {
            for e in &s.entries {
                assert!((0.0..=1.0).contains(&e.score));
            }
        }
        for s0 in &sc0 {
            assert_eq!(&sc[s0.index], s0);
        }
        // nothing left to score: union is the input
        let all = fgps_subset(&p, &b, 10_000, &cfg(), 9).unwrap();
        assert_eq!(generator_score_remainder(&g, &p, &b, &all, 32, 9).unwrap(), all);
    }
}
