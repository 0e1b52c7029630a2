//! Best-first search ordered by cumulative policy log-probability.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{child_of, Evaluator, Outcome, SearchBudget, SearchResult};
use crate::kernel::{ProofState, Tactic};
use crate::policy::{sample_candidates, TacticPolicy};

/// One popped-and-expanded node, in expansion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub priority: f64,
    pub steps: u32,
    pub key: String,
}

struct Entry {
    priority: f64,
    steps: u32,
    key: String,
    node: usize,
}

// Higher log-prob first, then fewer steps, then the smaller canonical key.
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.steps.cmp(&self.steps))
            .then_with(|| other.key.cmp(&self.key))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

struct Node {
    state: ProofState,
    parent: Option<(usize, Tactic)>,
}

fn proof_to(nodes: &[Node], mut id: usize, last: Tactic) -> Vec<Tactic> {
    let mut proof = vec![last];
    while let Some((p, t)) = &nodes[id].parent {
        proof.push(t.clone());
        id = *p;
    }
    proof.reverse();
    proof
}

/// Best-first search from `start`, sampling `per_node` tactics at each
/// expanded node. Appends every expansion to `trace` when given.
pub fn best_first_search(
    evaluator: &mut Evaluator<'_>,
    start: &ProofState,
    budget: SearchBudget,
    per_node: usize,
    seed: u64,
    mut trace: Option<&mut Vec<Expansion>>,
) -> SearchResult {
    let started = Instant::now();
    let mut expansions = 0u64;
    let done = |outcome, proof, n| SearchResult::finish(outcome, proof, n, 0, started);
    if start.is_proved() {
        return done(Outcome::Proved, Vec::new(), 0);
    }
    if budget.max_expansions == 0 {
        return done(Outcome::BudgetHit, Vec::new(), 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: None,
    }];
    let root_key = start.goals_key();
    let mut seen = HashSet::from([root_key.clone()]);
    let mut queue = BinaryHeap::from([Entry {
        priority: 0.0,
        steps: 0,
        key: root_key,
        node: 0,
    }]);

    while let Some(entry) = queue.pop() {
        if started.elapsed().as_secs_f64() > budget.wall_clock_secs {
            return done(Outcome::BudgetHit, Vec::new(), expansions);
        }
        if entry.steps >= budget.max_depth {
            continue;
        }
        let state = nodes[entry.node].state.clone();
        let eval = evaluator.eval(&state);
        if eval.actions.is_empty() {
            continue;
        }
        if expansions >= budget.max_expansions {
            return done(Outcome::BudgetHit, Vec::new(), expansions);
        }
        expansions += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(Expansion {
                priority: entry.priority,
                steps: entry.steps,
                key: entry.key.clone(),
            });
        }
        let candidates =
            sample_candidates(&eval, per_node, &mut rng).expect("action set is non-empty");
        for c in candidates {
            let child = child_of(&state, &eval, c.index);
            if child.is_proved() {
                let proof = proof_to(&nodes, entry.node, c.tactic);
                debug_assert!(start.check_proof(&proof));
                return done(Outcome::Proved, proof, expansions);
            }
            let key = child.goals_key();
            if !seen.insert(key.clone()) {
                continue;
            }
            queue.push(Entry {
                priority: entry.priority + eval.log_probs[c.index],
                steps: entry.steps + 1,
                key,
                node: nodes.len(),
            });
            nodes.push(Node {
                state: child,
                parent: Some((entry.node, c.tactic)),
            });
        }
    }
    done(Outcome::Exhausted, Vec::new(), expansions)
}

/// One seeded best-first proof attempt from `start`.
pub fn best_first_attempt(
    policy: &TacticPolicy,
    start: &ProofState,
    budget: SearchBudget,
    per_node: usize,
    seed: u64,
) -> SearchResult {
    best_first_search(&mut Evaluator::new(policy), start, budget, per_node, seed, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::parse_equation;
    use crate::policy::DEFAULT_FEATURE_DIM;

    fn st(eq: &str) -> ProofState {
        ProofState::single(parse_equation(eq).unwrap())
    }

    fn uniform() -> TacticPolicy {
        TacticPolicy::zeros("u", DEFAULT_FEATURE_DIM, 1.0)
    }

    fn budget(expansions: u64) -> SearchBudget {
        SearchBudget::new(1000, 10, 60.0, expansions)
    }

    #[test]
    fn zero_budget_is_budget_hit() {
        let r = best_first_attempt(&uniform(), &st("a + b = b + a"), budget(0), 32, 0);
        assert_eq!(r.outcome, Outcome::BudgetHit);
        assert_eq!(r.nodes_expanded, 0);
    }

    #[test]
    fn closed_goal_in_one_expansion() {
        let r = best_first_attempt(&uniform(), &st("a = a"), budget(10), 32, 0);
        assert_eq!(r.outcome, Outcome::Proved);
        assert_eq!(r.proof, vec![Tactic::Refl]);
        assert_eq!(r.nodes_expanded, 1);
    }

    #[test]
    fn stuck_start_is_exhausted() {
        let r = best_first_attempt(&uniform(), &st("a = b"), budget(10), 32, 0);
        assert_eq!(r.outcome, Outcome::Exhausted);
        assert_eq!(r.nodes_expanded, 0);
    }

    #[test]
    fn forced_line_takes_at_most_its_length() {
        // a = c under a = b and b = c: each state admits exactly one tactic.
        let s: ProofState = "(state 0 (goal (hyps (h0 a b) (h1 b c)) a c))".parse().unwrap();
        let mut cur = s.clone();
        for _ in 0..3 {
            let ts = cur.enumerate_tactics();
            assert_eq!(ts.len(), 1);
            cur = cur.apply(&ts[0]).unwrap();
        }
        assert!(cur.is_proved());
        let r = best_first_attempt(&uniform(), &s, budget(100), 32, 3);
        assert_eq!(r.outcome, Outcome::Proved);
        assert_eq!(r.proof.len(), 3);
        assert!(s.check_proof(&r.proof));
        assert!(r.nodes_expanded <= 3);
    }

    #[test]
    fn priorities_never_increase() {
        let p = TacticPolicy::seeded("p", DEFAULT_FEATURE_DIM, 1.0, 9);
        let mut ev = Evaluator::new(&p);
        let mut trace = Vec::new();
        let s = st("a * b + c + 0 = c + b * a");
        best_first_search(&mut ev, &s, budget(300), 32, 5, Some(&mut trace));
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|w| w[1].priority <= w[0].priority));
    }

    #[test]
    fn proofs_replay() {
        let p = uniform();
        for (i, eq) in ["a + b + c = c + b + a", "0 + a * 1 = a", "S(a) + b = S(b + a)"]
            .iter()
            .enumerate()
        {
            let s = st(eq);
            let r = best_first_attempt(&p, &s, budget(2000), 32, i as u64);
            if r.is_proved() {
                assert!(s.check_proof(&r.proof));
            } else {
                assert!(r.proof.is_empty());
            }
        }
    }
}
