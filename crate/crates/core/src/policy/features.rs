//! Hashed structural features of a `(state, tactic)` pair.
//!
//! Slot 0 is a constant bias; every other feature is hashed into
//! `1..dim`. Colliding features add up.

use crate::hashing::Fnv;
use crate::kernel::{Goal, NodeKind, ProofState, Side, Tactic, Term};

pub const DEFAULT_FEATURE_DIM: usize = 256;

/// Sparse view of a fixed-dimension real vector, sorted by index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_entries(mut raw: Vec<(u32, f64)>) -> Self {
        raw.sort_by_key(|e| e.0);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (i, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        FeatureVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| w[i as usize] * v).sum()
    }

    /// `out += scale * self`
    pub fn add_scaled(&self, out: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            out[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        self.add_scaled(&mut d, 1.0);
        d
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }
}

struct Builder {
    dim: u64,
    raw: Vec<(u32, f64)>,
}

impl Builder {
    fn new(dim: usize) -> Self {
        assert!(dim >= 2, "feature dimension must leave room for the bias slot");
        Builder {
            dim: dim as u64,
            raw: vec![(0, 1.0)],
        }
    }

    fn put(&mut self, tag: &str, parts: &[u64], value: f64) {
        let mut h = Fnv::new();
        h.write(tag.as_bytes());
        for &p in parts {
            h.write_u64(p);
        }
        let idx = 1 + (h.finish() % (self.dim - 1));
        self.raw.push((idx as u32, value));
    }

    fn finish(self) -> FeatureVector {
        FeatureVector::from_entries(self.raw)
    }
}

fn sorted_hashes(t: &Term) -> Vec<u64> {
    let mut v = Vec::new();
    t.subterm_hashes(&mut v);
    v.sort_unstable();
    v
}

fn multiset_overlap(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Size mismatch between the two sides: zero iff they are identical.
pub fn goal_gap(g: &Goal) -> usize {
    gap_between(&sorted_hashes(&g.lhs), &sorted_hashes(&g.rhs))
}

fn gap_between(a: &[u64], b: &[u64]) -> usize {
    a.len() + b.len() - 2 * multiset_overlap(a, b)
}

fn sign(x: i64) -> u64 {
    match x.cmp(&0) {
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => 1,
        std::cmp::Ordering::Greater => 2,
    }
}

/// Features of applying `tactic` to `state`, given the resulting `next`.
pub fn featurize(state: &ProofState, tactic: &Tactic, next: &ProofState, dim: usize) -> FeatureVector {
    StateFeatures::new(state, dim).featurize(tactic, next)
}

/// The tactic-independent part of `featurize`, computed once per state.
pub struct StateFeatures<'s> {
    dim: usize,
    n_goals: usize,
    goal: Option<&'s Goal>,
    shared: Vec<(u32, f64)>,
    lhs_hashes: Vec<u64>,
    rhs_hashes: Vec<u64>,
    gap: i64,
    size_diff: i64,
}

impl<'s> StateFeatures<'s> {
    pub fn new(state: &'s ProofState, dim: usize) -> Self {
        let mut b = Builder::new(dim);
        let goal = state.first_goal();
        let (mut lhs_hashes, mut rhs_hashes) = (Vec::new(), Vec::new());
        let (mut gap, mut size_diff) = (0, 0);
        if let Some(goal) = goal {
            lhs_hashes = sorted_hashes(&goal.lhs);
            rhs_hashes = sorted_hashes(&goal.rhs);
            let size = lhs_hashes.len() + rhs_hashes.len();
            b.put("goals", &[state.goals.len().min(3) as u64], 1.0);
            b.put("size", &[(size / 4).min(6) as u64], 1.0);
            b.put(
                "gdepth",
                &[goal.lhs.depth().max(goal.rhs.depth()).min(6) as u64],
                1.0,
            );
            b.put("nhyps", &[goal.hyps.len().min(2) as u64], 1.0);
            let (l, r) = (goal.lhs.kind_counts(), goal.rhs.kind_counts());
            for nk in NodeKind::ALL {
                let c = l[nk.index()] + r[nk.index()];
                if c > 0 {
                    b.put("nodes", &[nk as u64], c as f64 / size as f64);
                }
            }
            gap = gap_between(&lhs_hashes, &rhs_hashes) as i64;
            size_diff = (lhs_hashes.len() as i64 - rhs_hashes.len() as i64).abs();
        }
        StateFeatures {
            dim,
            n_goals: state.goals.len(),
            goal,
            shared: b.raw,
            lhs_hashes,
            rhs_hashes,
            gap,
            size_diff,
        }
    }

    pub fn featurize(&self, tactic: &Tactic, next: &ProofState) -> FeatureVector {
        let mut b = Builder::new(self.dim);
        let Some(goal) = self.goal else {
            return b.finish();
        };
        let kind = tactic.kind() as u64;
        let pos = tactic.position();
        let side = pos.map_or(2, |p| p.side as u64);
        let depth = pos.map_or(0, |p| p.depth().min(4)) as u64;

        b.put("kind", &[kind], 1.0);
        b.put("kind_side", &[kind, side], 1.0);
        b.put("kind_depth", &[kind, depth], 1.0);
        b.raw.extend_from_slice(&self.shared[1..]);

        if next.goals.len() < self.n_goals {
            b.put("closes", &[kind], 1.0);
            b.put("remaining", &[next.goals.len().min(3) as u64], 1.0);
            return b.finish();
        }

        let after = next.first_goal().expect("rewrites keep the goal");
        let p = pos.expect("only refl closes goals");
        let (other_hashes, changed_hashes) = match p.side {
            Side::Lhs => (&self.rhs_hashes, sorted_hashes(&after.lhs)),
            Side::Rhs => (&self.lhs_hashes, sorted_hashes(&after.rhs)),
        };
        let gap_after = gap_between(&changed_hashes, other_hashes) as i64;
        let dgap = gap_after - self.gap;
        b.put("dgap", &[kind, sign(dgap)], 1.0);
        b.put("dgap_val", &[kind], (dgap as f64 / 4.0).clamp(-1.0, 1.0));
        b.put("gap_after", &[gap_after.min(10) as u64], 1.0);
        if after.lhs == after.rhs {
            b.put("enables_refl", &[kind], 1.0);
        }

        let size_diff_after = (changed_hashes.len() as i64 - other_hashes.len() as i64).abs();
        b.put("dsize", &[kind, sign(size_diff_after - self.size_diff)], 1.0);

        let old = goal.at(p).expect("tactic applied here");
        let new = after.at(p).expect("replacement keeps the position");
        if other_hashes.binary_search(&old.stable_hash()).is_ok() {
            b.put("was_shared", &[kind], 1.0);
        }
        if other_hashes.binary_search(&new.stable_hash()).is_ok() {
            b.put("now_shared", &[kind], 1.0);
        }
        if p.side == Side::Rhs {
            b.put("rhs_rewrite", &[kind, sign(dgap)], 1.0);
        }
        b.finish()
    }
}
