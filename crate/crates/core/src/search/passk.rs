//! Repeated evaluation attempts and pass@k.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_first_search, Evaluator, Outcome, SearchBudget};
use crate::hashing::derive_seed;
use crate::kernel::{ProofState, Tactic};
use crate::policy::TacticPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptConfig {
    pub budget: SearchBudget,
    /// Tactics sampled per expanded node.
    pub candidates_per_node: usize,
    /// Record elapsed seconds in attempt logs. Off by default so logs are
    /// byte-identical across runs.
    pub record_wall_clock: bool,
}

/// One line of an attempt log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub theorem: u64,
    pub attempt: u32,
    pub seed: u64,
    pub outcome: Outcome,
    pub proof: Vec<Tactic>,
    pub nodes: u64,
    pub elapsed: Option<f64>,
}

/// Runs `k` best-first attempts per theorem. Attempt `j` on theorem `id`
/// uses a seed derived from `(seed, id, j)`. Theorems run in parallel on
/// the current rayon pool; the output order is theorem-major, then attempt.
pub fn run_attempts(
    policy: &TacticPolicy,
    theorems: &[(u64, ProofState)],
    k: u32,
    cfg: &AttemptConfig,
    seed: u64,
) -> Vec<AttemptRecord> {
    theorems
        .par_iter()
        .map(|(id, start)| {
            let mut ev = Evaluator::new(policy);
            (0..k)
                .map(|j| {
                    let s = derive_seed(seed, &[*id, j as u64]);
                    let r = best_first_search(&mut ev, start, cfg.budget, cfg.candidates_per_node, s, None);
                    AttemptRecord {
                        theorem: *id,
                        attempt: j,
                        seed: s,
                        outcome: r.outcome,
                        proof: r.proof,
                        nodes: r.nodes_expanded,
                        elapsed: cfg.record_wall_clock.then_some(r.elapsed_secs),
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

/// Fraction of `theorems` with a proved record among attempts `0..k`.
/// Theorems absent from the log count as failures.
pub fn pass_at_k_from_log(records: &[AttemptRecord], theorems: &[u64], k: u32) -> f64 {
    if theorems.is_empty() {
        return 0.0;
    }
    let proved: BTreeSet<u64> = records
        .iter()
        .filter(|r| r.attempt < k && r.outcome == Outcome::Proved)
        .map(|r| r.theorem)
        .collect();
    let hits = theorems.iter().filter(|t| proved.contains(t)).count();
    hits as f64 / theorems.len() as f64
}

/// Per-theorem first successful attempt index, for reporting.
pub fn first_success(records: &[AttemptRecord]) -> BTreeMap<u64, u32> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| r.outcome == Outcome::Proved) {
        let e = out.entry(r.theorem).or_insert(r.attempt);
        *e = (*e).min(r.attempt);
    }
    out
}

/// pass@k over `theorems`, indexing them by position.
pub fn pass_at_k(
    policy: &TacticPolicy,
    theorems: &[ProofState],
    k: u32,
    cfg: &AttemptConfig,
    seed: u64,
) -> f64 {
    let indexed: Vec<(u64, ProofState)> = theorems
        .iter()
        .enumerate()
        .map(|(i, s)| (i as u64, s.clone()))
        .collect();
    let ids: Vec<u64> = indexed.iter().map(|(i, _)| *i).collect();
    pass_at_k_from_log(&run_attempts(policy, &indexed, k, cfg, seed), &ids, k)
}
