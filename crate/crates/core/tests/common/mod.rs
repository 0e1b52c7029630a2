#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use curriprove::corpus::{build_curriculum, generate_corpus, Triplet};
use curriprove::kernel::ProofState;
use curriprove::pairing::PreferencePair;
use curriprove::pipeline::{sha256_hex, RunConfig};
use curriprove::policy::{BatchMode, FitConfig, TacticPolicy};
use curriprove::search::SearchBudget;
use rand::Rng;

/// Triplets from a small fixed corpus, every difficulty.
pub fn triplets(seed: u64, theorems: usize) -> Vec<Triplet> {
    let trees = generate_corpus(seed, theorems, 6).unwrap();
    build_curriculum(&trees).unwrap().iter().cloned().collect()
}

/// States with at least two applicable tactics.
pub fn branching_states(seed: u64, theorems: usize) -> Vec<ProofState> {
    triplets(seed, theorems)
        .into_iter()
        .map(|t| t.state)
        .filter(|s| s.enumerate_tactics().len() >= 2)
        .collect()
}

/// Pairs of two distinct applicable tactics at random states.
pub fn random_pairs(rng: &mut impl Rng, states: &[ProofState], n: usize) -> Vec<PreferencePair> {
    (0..n)
        .map(|_| {
            let s = &states[rng.gen_range(0..states.len())];
            let tactics = s.enumerate_tactics();
            let w = rng.gen_range(0..tactics.len());
            let mut l = rng.gen_range(0..tactics.len() - 1);
            if l >= w {
                l += 1;
            }
            PreferencePair {
                index: 0,
                theorem: 0,
                state: s.clone(),
                chosen: tactics[w].clone(),
                rejected: tactics[l].clone(),
                score_w: 1.0,
                score_l: 0.0,
            }
        })
        .collect()
}

pub fn random_weights(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()
}

pub fn policy_with(weights: Vec<f64>, temperature: f64) -> TacticPolicy {
    TacticPolicy {
        model_id: "p".into(),
        temperature,
        weights,
    }
}

/// Central-difference gradient of `f` at `x`, coordinate by coordinate.
pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// A run small enough for a unit-test time budget.
pub fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        seed,
        ..Default::default()
    };
    c.corpus.size = 60;
    c.corpus.max_depth = 4;
    c.sft = FitConfig {
        epochs: 20,
        learning_rate: 0.5,
        batch: BatchMode::Full,
    };
    c.scoring.k = 8;
    c.scoring.n_attempt = 4;
    c.scoring.subset_size = 20;
    c.scoring.budget = SearchBudget::new(100, 8, 60.0, 3);
    c.iterate.iterations = 3;
    c
}

/// Relative path to SHA-256 of every file under `root`.
pub fn tree_digests(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, sha256_hex(&std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
