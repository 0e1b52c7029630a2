//! Solved-theorem corpora, distance/difficulty labels and curriculum buckets.
//!
//! Theorems are generated backwards: pick a common normal form, apply
//! random inverse rewrites to each side, and the forward proof undoes them
//! in reverse order before closing with `refl`. Every generated proof is
//! replayed through the kernel before it is accepted.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::derive_seed;
use crate::kernel::{Goal, Hypothesis, Position, ProofState, Rule, Side, Tactic, Term, MAX_NUMERAL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("could only generate {produced} of {requested} distinct theorems")]
    GenerationExhausted { requested: usize, produced: usize },
    #[error("state is not on the recorded proof path")]
    StateNotInTree,
    #[error("state is already proved")]
    StateAlreadyProved,
    #[error("theorem {theorem}: replay diverges at step {step}")]
    ReplayMismatch { theorem: u64, step: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A theorem together with one recorded proof path.
///
/// `states[0]` is the theorem, `states[i + 1]` is the result of applying
/// `tactics[i]` to `states[i]`, and the last state has no goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTree {
    pub id: u64,
    pub tactics: Vec<Tactic>,
    pub states: Vec<ProofState>,
}

impl ProofTree {
    /// Replays `tactics` from `root` and keeps every intermediate state.
    pub fn from_proof(id: u64, root: ProofState, tactics: Vec<Tactic>) -> Result<Self, CorpusError> {
        let mut states = vec![root];
        for (step, t) in tactics.iter().enumerate() {
            let next = states[step]
                .apply(t)
                .map_err(|_| CorpusError::ReplayMismatch { theorem: id, step })?;
            states.push(next);
        }
        if !states.last().expect("root present").is_proved() {
            return Err(CorpusError::ReplayMismatch {
                theorem: id,
                step: tactics.len(),
            });
        }
        Ok(ProofTree { id, tactics, states })
    }

    pub fn root(&self) -> &ProofState {
        &self.states[0]
    }

    pub fn terminal(&self) -> &ProofState {
        self.states.last().expect("non-empty path")
    }

    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }

    /// `(state, tactic, successor)` along the recorded path.
    pub fn edges(&self) -> impl Iterator<Item = (&ProofState, &Tactic, &ProofState)> {
        self.tactics
            .iter()
            .enumerate()
            .map(|(i, t)| (&self.states[i], t, &self.states[i + 1]))
    }

    /// Re-applies every tactic and checks each stored state.
    pub fn verify(&self) -> Result<(), CorpusError> {
        let mismatch = |step| CorpusError::ReplayMismatch {
            theorem: self.id,
            step,
        };
        if self.states.len() != self.tactics.len() + 1 {
            return Err(mismatch(self.tactics.len().min(self.states.len())));
        }
        for (step, (s, t, next)) in self.edges().enumerate() {
            match s.apply(t) {
                Ok(n) if n == *next => {}
                _ => return Err(mismatch(step)),
            }
        }
        if !self.terminal().is_proved() {
            return Err(mismatch(self.tactics.len()));
        }
        Ok(())
    }
}

/// Number of tactics from `state` to "no goals" along the recorded path.
pub fn distance(tree: &ProofTree, state: &ProofState) -> Result<usize, CorpusError> {
    let i = tree
        .states
        .iter()
        .position(|s| s == state)
        .ok_or(CorpusError::StateNotInTree)?;
    Ok(tree.tactics.len() - i)
}

/// Difficulty of a non-proved state; identical to its distance.
pub fn difficulty(tree: &ProofTree, state: &ProofState) -> Result<u32, CorpusError> {
    let d = distance(tree, state)?;
    if d == 0 {
        return Err(CorpusError::StateAlreadyProved);
    }
    Ok(d as u32)
}

/// `(s_i, t_i, DIF_i)` plus the theorem it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub theorem: u64,
    pub state: ProofState,
    pub tactic: Tactic,
    pub difficulty: u32,
}

/// Triplets grouped by difficulty, iterated from easy to hard.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurriculumDataset {
    pub buckets: BTreeMap<u32, Vec<Triplet>>,
}

impl CurriculumDataset {
    pub fn bucket(&self, n: u32) -> &[Triplet] {
        self.buckets.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.buckets.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All triplets, easiest bucket first.
    pub fn iter(&self) -> impl Iterator<Item = &Triplet> {
        self.buckets.values().flatten()
    }

    /// Levels holding fewer than `min` triplets.
    pub fn small_buckets(&self, min: usize) -> Vec<u32> {
        self.buckets
            .iter()
            .filter(|(_, v)| v.len() < min)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Extracts every `(state, next tactic, difficulty)` triplet and buckets by
/// difficulty. Duplicate states from different theorems are all kept.
pub fn build_curriculum(trees: &[ProofTree]) -> Result<CurriculumDataset, CorpusError> {
    let mut buckets: BTreeMap<u32, Vec<Triplet>> = BTreeMap::new();
    for tree in trees {
        tree.verify()?;
        let n = tree.len();
        for (i, (s, t, _)) in tree.edges().enumerate() {
            let dif = (n - i) as u32;
            buckets.entry(dif).or_default().push(Triplet {
                theorem: tree.id,
                state: s.clone(),
                tactic: t.clone(),
                difficulty: dif,
            });
        }
    }
    Ok(CurriculumDataset { buckets })
}

// ---- generation ----

const MAX_SIDE_SIZE: usize = 15;
const VARS: [&str; 3] = ["a", "b", "c"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Inverse {
    Rule(Rule),
    Hyp,
}

const INVERSES: [(Inverse, u32); 9] = [
    (Inverse::Rule(Rule::CommAdd), 6),
    (Inverse::Rule(Rule::AssocAdd), 6),
    (Inverse::Rule(Rule::ZeroAdd), 2),
    (Inverse::Rule(Rule::AddZero), 2),
    (Inverse::Rule(Rule::CommMul), 4),
    (Inverse::Rule(Rule::OneMul), 2),
    (Inverse::Rule(Rule::SuccAdd), 4),
    (Inverse::Rule(Rule::SimpArith), 2),
    (Inverse::Hyp, 1),
];

fn random_leaf(rng: &mut impl Rng) -> Term {
    let r: f64 = rng.gen();
    if r < 0.75 {
        Term::var(VARS[rng.gen_range(0..VARS.len())])
    } else if r < 0.85 {
        Term::Zero
    } else {
        Term::numeral(rng.gen_range(1..=2))
    }
}

fn random_term(rng: &mut impl Rng, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.3) {
        return random_leaf(rng);
    }
    let r: f64 = rng.gen();
    if r < 0.5 {
        Term::add(random_term(rng, depth - 1), random_term(rng, depth - 1))
    } else if r < 0.8 {
        Term::mul(random_term(rng, depth - 1), random_term(rng, depth - 1))
    } else {
        Term::succ(random_term(rng, depth - 1))
    }
}

/// A term `u` such that the forward step at the same position turns `u`
/// back into `t`.
fn invert(
    inv: Inverse,
    t: &Term,
    rng: &mut impl Rng,
    hyps: &mut Vec<Hypothesis>,
    at: Position,
) -> Option<(Term, Tactic)> {
    let rule = match inv {
        Inverse::Hyp => {
            let name = format!("h{}", hyps.len());
            let u = random_term(rng, 1);
            if u == *t || hyps.iter().any(|h| h.lhs == u) {
                return None;
            }
            hyps.push(Hypothesis {
                name: name.clone(),
                lhs: u.clone(),
                rhs: t.clone(),
            });
            return Some((u, Tactic::ApplyHyp { name, at }));
        }
        Inverse::Rule(r) => r,
    };
    let u = match (rule, t) {
        (Rule::CommAdd, Term::Add(a, b)) => Term::Add(b.clone(), a.clone()),
        (Rule::AssocAdd, Term::Add(a, bc)) => match bc.as_ref() {
            Term::Add(b, c) => Term::add(Term::Add(a.clone(), b.clone()), c.as_ref().clone()),
            _ => return None,
        },
        (Rule::ZeroAdd, _) => Term::add(Term::Zero, t.clone()),
        (Rule::AddZero, _) => Term::add(t.clone(), Term::Zero),
        (Rule::CommMul, Term::Mul(a, b)) => Term::Mul(b.clone(), a.clone()),
        (Rule::OneMul, _) => Term::mul(Term::numeral(1), t.clone()),
        (Rule::SuccAdd, Term::Succ(ab)) => match ab.as_ref() {
            Term::Add(a, b) => Term::add(Term::Succ(a.clone()), b.as_ref().clone()),
            _ => return None,
        },
        (Rule::SimpArith, _) => {
            let n = t.as_numeral()?;
            if n > MAX_NUMERAL {
                return None;
            }
            if n >= 2 && rng.gen_bool(0.3) {
                let d = (2..=n).find(|d| n % d == 0 && *d < n)?;
                Term::mul(Term::numeral(d), Term::numeral(n / d))
            } else {
                let i = rng.gen_range(0..=n);
                Term::add(Term::numeral(i), Term::numeral(n - i))
            }
        }
        _ => return None,
    };
    if u == *t {
        return None;
    }
    let tactic = Tactic::Rewrite { rule, at };
    Some((u, tactic))
}

fn pick_inverse(rng: &mut impl Rng) -> Vec<Inverse> {
    // Weighted order without replacement, so every inverse is eventually tried.
    let mut pool: Vec<(Inverse, f64)> = INVERSES
        .iter()
        .map(|&(i, w)| (i, rng.gen::<f64>().powf(1.0 / w as f64)))
        .collect();
    pool.sort_by(|a, b| b.1.total_cmp(&a.1));
    pool.into_iter().map(|(i, _)| i).collect()
}

/// One goal whose recorded proof has exactly `len` tactics.
fn random_goal(rng: &mut impl Rng, len: usize) -> Option<(Goal, Vec<Tactic>)> {
    let normal = random_term(rng, 3);
    let mut goal = Goal::new(normal.clone(), normal);
    let mut hyps = Vec::new();
    let mut forward: Vec<Tactic> = Vec::new();
    let mut last: Option<(Side, Tactic)> = None;
    for _ in 0..len - 1 {
        let mut done = false;
        for _ in 0..20 {
            let side = if rng.gen_bool(0.6) { Side::Lhs } else { Side::Rhs };
            let positions = goal.side(side).positions();
            let path = positions.choose(rng)?.clone();
            let at = Position::new(side, path);
            let sub = goal.at(&at)?.clone();
            for inv in pick_inverse(rng) {
                let mut trial_hyps = hyps.clone();
                let Some((u, tac)) = invert(inv, &sub, rng, &mut trial_hyps, at.clone()) else {
                    continue;
                };
                // Two commutations in a row at one spot cancel out.
                if last.as_ref() == Some(&(side, tac.clone()))
                    && matches!(inv, Inverse::Rule(Rule::CommAdd | Rule::CommMul))
                {
                    continue;
                }
                let next = goal.replace_at(&at, u)?;
                if next.side(side).size() > MAX_SIDE_SIZE {
                    continue;
                }
                goal = next;
                hyps = trial_hyps;
                last = Some((side, tac.clone()));
                forward.push(tac);
                done = true;
                break;
            }
            if done {
                break;
            }
        }
        if !done {
            return None;
        }
    }
    forward.reverse();
    forward.push(Tactic::Refl);
    goal.hyps = hyps.into();
    Some((goal, forward))
}

fn random_theorem(rng: &mut impl Rng, max_depth: usize) -> Option<(ProofState, Vec<Tactic>)> {
    let len = rng.gen_range(1..=max_depth);
    let lens = if len >= 2 && rng.gen_bool(0.15) {
        let first = rng.gen_range(1..len);
        vec![first, len - first]
    } else {
        vec![len]
    };
    let mut goals = Vec::new();
    let mut proof = Vec::new();
    for l in lens {
        let (g, p) = random_goal(rng, l)?;
        goals.push(g);
        proof.extend(p);
    }
    Some((ProofState::new(goals), proof))
}

/// Rejects proofs where `refl` would already close a goal before its
/// recorded closing step.
fn proof_is_tight(tree: &ProofTree) -> bool {
    tree.edges().all(|(s, t, _)| {
        let g = s.first_goal().expect("open goal before each step");
        (*t == Tactic::Refl) == (g.lhs == g.rhs)
    })
}

/// Generates `count` distinct theorems with verified proofs of length at
/// most `max_depth`. Deterministic in `seed`.
pub fn generate_corpus(seed: u64, count: usize, max_depth: usize) -> Result<Vec<ProofTree>, CorpusError> {
    if count == 0 || max_depth == 0 {
        return Err(CorpusError::InvalidArgument(
            "count and max_depth must be positive".into(),
        ));
    }
    let budget = count.saturating_mul(50).saturating_add(1_000);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for attempt in 0..budget as u64 {
        if out.len() == count {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[attempt]));
        let Some((root, proof)) = random_theorem(&mut rng, max_depth) else {
            continue;
        };
        let key = root.to_string();
        if seen.contains(&key) {
            continue;
        }
        let Ok(tree) = ProofTree::from_proof(out.len() as u64, root, proof) else {
            continue;
        };
        if !proof_is_tight(&tree) {
            continue;
        }
        seen.insert(key);
        out.push(tree);
    }
    if out.len() < count {
        return Err(CorpusError::GenerationExhausted {
            requested: count,
            produced: out.len(),
        });
    }
    Ok(out)
}
