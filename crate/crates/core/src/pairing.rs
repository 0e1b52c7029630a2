//! Turns scored candidate sets into preference pairs.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::kernel::{ProofState, Tactic};
use crate::scoring::{ScoreEntry, ScoredCandidateSet};

/// Slack on the threshold test so that exact rational gaps such as
/// `0.8 - 0.3` are not accepted through rounding.
pub const GAP_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PairingError {
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("max pairs per state must be positive")]
    InvalidLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    /// Position of the state among its bucket's distinct states.
    pub index: usize,
    pub theorem: u64,
    pub state: ProofState,
    pub chosen: Tactic,
    pub rejected: Tactic,
    pub score_w: f64,
    pub score_l: f64,
}

impl PreferencePair {
    pub fn gap(&self) -> f64 {
        self.score_w - self.score_l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualRole {
    /// A tactic may be chosen or rejected at a state, not both.
    Forbid,
    Allow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub threshold: f64,
    pub dual_role: DualRole,
    pub max_pairs_per_state: Option<usize>,
    /// Only pair entries scored the same way (search with search, generator
    /// with generator).
    pub same_provenance_only: bool,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            threshold: 0.5,
            dual_role: DualRole::Forbid,
            max_pairs_per_state: None,
            same_provenance_only: false,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<(), PairingError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(PairingError::InvalidThreshold(self.threshold));
        }
        if self.max_pairs_per_state == Some(0) {
            return Err(PairingError::InvalidLimit);
        }
        Ok(())
    }
}

/// True iff `w` may be preferred over `l` under threshold `th`.
pub fn passes_threshold(score_w: f64, score_l: f64, th: f64) -> bool {
    score_w > score_l && score_w - score_l > th + GAP_EPSILON
}

fn pairs_at(set: &ScoredCandidateSet, cfg: &PairingConfig) -> Vec<PreferencePair> {
    let entries: &[ScoreEntry] = &set.entries;
    let names: Vec<String> = entries.iter().map(|e| e.tactic.to_string()).collect();
    let mut cands: Vec<(usize, usize)> = Vec::new();
    for (w, ew) in entries.iter().enumerate() {
        for (l, el) in entries.iter().enumerate() {
            if w == l || !passes_threshold(ew.score, el.score, cfg.threshold) {
                continue;
            }
            if cfg.same_provenance_only && ew.provenance != el.provenance {
                continue;
            }
            cands.push((w, l));
        }
    }
    let gap = |&(w, l): &(usize, usize)| entries[w].score - entries[l].score;
    cands.sort_by(|a, b| {
        gap(b)
            .total_cmp(&gap(a))
            .then_with(|| names[a.0].cmp(&names[b.0]))
            .then_with(|| names[a.1].cmp(&names[b.1]))
    });

    let limit = cfg.max_pairs_per_state.unwrap_or(usize::MAX);
    let mut chosen = HashSet::new();
    let mut rejected = HashSet::new();
    let mut out = Vec::new();
    for (w, l) in cands {
        if out.len() >= limit {
            break;
        }
        if cfg.dual_role == DualRole::Forbid && (rejected.contains(&w) || chosen.contains(&l)) {
            continue;
        }
        chosen.insert(w);
        rejected.insert(l);
        out.push(PreferencePair {
            index: set.index,
            theorem: set.theorem,
            state: set.state.clone(),
            chosen: entries[w].tactic.clone(),
            rejected: entries[l].tactic.clone(),
            score_w: entries[w].score,
            score_l: entries[l].score,
        });
    }
    out
}

/// Pairs per state, greedily by descending score gap (ties by tactic text),
/// in input state order.
pub fn filter_and_pair(
    scored: &[ScoredCandidateSet],
    cfg: &PairingConfig,
) -> Result<Vec<PreferencePair>, PairingError> {
    cfg.validate()?;
    Ok(scored.iter().flat_map(|s| pairs_at(s, cfg)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub n: usize,
    /// Pair count per state index.
    pub per_state: BTreeMap<usize, usize>,
    /// Gap counts in ten equal bins over `[0, 1]`.
    pub gap_histogram: [usize; 10],
}

pub fn pair_stats(pairs: &[PreferencePair]) -> PairStats {
    let mut per_state = BTreeMap::new();
    let mut gap_histogram = [0; 10];
    for p in pairs {
        *per_state.entry(p.index).or_insert(0) += 1;
        let bin = ((p.gap() * 10.0).floor() as usize).min(9);
        gap_histogram[bin] += 1;
    }
    PairStats {
        n: pairs.len(),
        per_state,
        gap_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_equation, Position, Rule, Side};
    use crate::scoring::Provenance;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn tactic(i: usize) -> Tactic {
        Tactic::Rewrite {
            rule: Rule::CommAdd,
            at: Position::new(Side::Lhs, vec![0; i]),
        }
    }

    fn set(scores: &[f64]) -> ScoredCandidateSet {
        ScoredCandidateSet {
            index: 0,
            theorem: 0,
            state: ProofState::single(parse_equation("a + b = b + a").unwrap()),
            entries: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoreEntry {
                    tactic: tactic(i),
                    score: s,
                    provenance: Provenance::Search,
                    n_success: 0,
                    n_attempt: 0,
                    multiplicity: 1,
                })
                .collect(),
        }
    }

    fn as_idx(pairs: &[PreferencePair]) -> Vec<(usize, usize)> {
        let idx = |t: &Tactic| (0..16).find(|&i| tactic(i) == *t).unwrap();
        pairs.iter().map(|p| (idx(&p.chosen), idx(&p.rejected))).collect()
    }

    #[test]
    fn three_tactics_one_pair() {
        let p = filter_and_pair(&[set(&[0.9, 0.2, 0.5])], &PairingConfig::default()).unwrap();
        assert_eq!(as_idx(&p), vec![(0, 1)]);
        assert_eq!(pair_stats(&p).n, 1);
    }

    #[test]
    fn greedy_keeps_same_role_reuse() {
        let p = filter_and_pair(&[set(&[1.0, 0.4, 0.0])], &PairingConfig::default()).unwrap();
        assert_eq!(as_idx(&p), vec![(0, 2), (0, 1)]);
    }

    #[test]
    fn forbid_blocks_cross_role() {
        // With a low threshold the middle tactics qualify on both sides.
        let scores = [1.0, 0.8, 0.1, 0.0];
        let cfg = PairingConfig {
            threshold: 0.05,
            ..Default::default()
        };
        let p = filter_and_pair(&[set(&scores)], &cfg).unwrap();
        let chosen: BTreeSet<_> = as_idx(&p).iter().map(|x| x.0).collect();
        let rejected: BTreeSet<_> = as_idx(&p).iter().map(|x| x.1).collect();
        assert!(chosen.is_disjoint(&rejected));
    }

    #[test]
    fn equal_scores_and_rational_edges() {
        assert!(filter_and_pair(&[set(&[0.4; 5])], &PairingConfig::default()).unwrap().is_empty());
        // 0.8 - 0.3 is exactly the threshold: not strictly above
        assert!(filter_and_pair(&[set(&[0.8, 0.3])], &PairingConfig::default()).unwrap().is_empty());
        assert!(pair_stats(&[]).n == 0);
    }

    #[test]
    fn bad_configs() {
        for th in [0.0, -0.1, 1.5, f64::NAN] {
            let cfg = PairingConfig {
                threshold: th,
                ..Default::default()
            };
            assert!(matches!(filter_and_pair(&[], &cfg), Err(PairingError::InvalidThreshold(_))));
        }
    }

    #[test]
    fn per_state_limit_and_provenance_filter() {
        let mut s = set(&[1.0, 0.9, 0.2, 0.1, 0.0]);
        let cfg = PairingConfig {
            max_pairs_per_state: Some(2),
            dual_role: DualRole::Allow,
            ..Default::default()
        };
        assert_eq!(filter_and_pair(&[s.clone()], &cfg).unwrap().len(), 2);
        s.entries[0].provenance = Provenance::Generator;
        let cfg = PairingConfig {
            same_provenance_only: true,
            dual_role: DualRole::Allow,
            ..Default::default()
        };
        let p = filter_and_pair(&[s], &cfg).unwrap();
        assert!(as_idx(&p).iter().all(|&(w, _)| w != 0));
    }

    fn tenths() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0u32..=10).prop_map(|k| k as f64 / 10.0), 0..8)
    }

    proptest! {
        #[test]
        fn allow_matches_brute_force(scores in tenths(), th_tenths in 1u32..=10) {
            let th = th_tenths as f64 / 10.0;
            let cfg = PairingConfig { threshold: th, dual_role: DualRole::Allow, ..Default::default() };
            let got: BTreeSet<_> = as_idx(&filter_and_pair(&[set(&scores)], &cfg).unwrap()).into_iter().collect();
            // exact integer comparison in tenths
            let mut want = BTreeSet::new();
            for (w, &a) in scores.iter().enumerate() {
                for (l, &b) in scores.iter().enumerate() {
                    let (a, b) = ((a * 10.0).round() as i64, (b * 10.0).round() as i64);
                    if a > b && a - b > th_tenths as i64 {
                        want.insert((w, l));
                    }
                }
            }
            prop_assert_eq!(got, want);
        }

        #[test]
        fn forbid_is_role_exclusive(scores in tenths(), th_tenths in 1u32..=10) {
            let cfg = PairingConfig { threshold: th_tenths as f64 / 10.0, ..Default::default() };
            let p = as_idx(&filter_and_pair(&[set(&scores)], &cfg).unwrap());
            let chosen: BTreeSet<_> = p.iter().map(|x| x.0).collect();
            let rejected: BTreeSet<_> = p.iter().map(|x| x.1).collect();
            prop_assert!(chosen.is_disjoint(&rejected));
            for (w, l) in p {
                prop_assert!(scores[w] - scores[l] > cfg.threshold);
            }
        }

        #[test]
        fn raising_threshold_never_adds_pairs(scores in tenths(), a in 1u32..=10, b in 1u32..=10) {
            let (lo, hi) = (a.min(b) as f64 / 10.0, a.max(b) as f64 / 10.0);
            for dual_role in [DualRole::Allow, DualRole::Forbid] {
                let n = |th| filter_and_pair(&[set(&scores)], &PairingConfig { threshold: th, dual_role, ..Default::default() }).unwrap().len();
                prop_assert!(n(hi) <= n(lo));
            }
        }

        #[test]
        fn output_is_deterministic(scores in tenths()) {
            let cfg = PairingConfig::default();
            prop_assert_eq!(
                filter_and_pair(&[set(&scores)], &cfg).unwrap(),
                filter_and_pair(&[set(&scores)], &cfg).unwrap()
            );
        }
    }
}
