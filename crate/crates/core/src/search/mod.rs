//! Policy-guided proof search.
//!
//! Two searchers share one accounting rule: an *expansion* is a policy
//! evaluation of a state that has at least one applicable tactic, whether
//! it grows the tree or advances a rollout. Expansion limits are the
//! deterministic budget; the wall-clock limit is a backstop.

mod best_first;
mod mcts;
mod passk;

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use best_first::{best_first_attempt, best_first_search, Expansion};
pub use mcts::{mcts_attempt, Mcts, MctsConfig};
pub use passk::{
    first_success, pass_at_k, pass_at_k_from_log, run_attempts, AttemptConfig, AttemptRecord,
};

use crate::kernel::{Goal, ProofState, Tactic};
use crate::policy::{Evaluation, TacticPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_simulations: u32,
    pub max_depth: u32,
    pub wall_clock_secs: f64,
    pub max_expansions: u64,
}

impl SearchBudget {
    pub fn new(max_simulations: u32, max_depth: u32, wall_clock_secs: f64, max_expansions: u64) -> Self {
        SearchBudget {
            max_simulations,
            max_depth,
            wall_clock_secs,
            max_expansions,
        }
    }

    /// Budget for a later round: expansion and wall-clock limits grow.
    pub fn grown(&self, rounds: u32, expansion_growth: f64, wall_clock_step: f64) -> Self {
        let factor = (1.0 + expansion_growth).powi(rounds as i32);
        SearchBudget {
            max_expansions: (self.max_expansions as f64 * factor).round() as u64,
            wall_clock_secs: self.wall_clock_secs + wall_clock_step * rounds as f64,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_simulations == 0 || self.max_depth == 0 || self.max_expansions == 0 {
            return Err("search limits must be positive".into());
        }
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.wall_clock_secs > 0.0) {
            return Err("wall-clock limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Proved,
    /// Every branch ended stuck or at the depth limit.
    Exhausted,
    BudgetHit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub outcome: Outcome,
    /// Tactics from the start state to "no goals"; empty unless proved.
    pub proof: Vec<Tactic>,
    pub nodes_expanded: u64,
    pub simulations: u32,
    pub elapsed_secs: f64,
}

impl SearchResult {
    pub fn is_proved(&self) -> bool {
        self.outcome == Outcome::Proved
    }

    fn finish(outcome: Outcome, proof: Vec<Tactic>, nodes: u64, sims: u32, started: Instant) -> Self {
        SearchResult {
            outcome,
            proof,
            nodes_expanded: nodes,
            simulations: sims,
            elapsed_secs: started.elapsed().as_secs_f64(),
        }
    }
}

/// Memoized policy evaluations keyed by open goals (step counts ignored).
///
/// The policy is fixed for the evaluator's lifetime, so hits are exact.
pub struct Evaluator<'p> {
    policy: &'p TacticPolicy,
    cache: HashMap<Vec<Goal>, Rc<Evaluation>>,
    capacity: usize,
}

impl<'p> Evaluator<'p> {
    pub fn new(policy: &'p TacticPolicy) -> Self {
        Self::with_capacity(policy, 200_000)
    }

    pub fn with_capacity(policy: &'p TacticPolicy, capacity: usize) -> Self {
        Evaluator {
            policy,
            cache: HashMap::new(),
            capacity,
        }
    }

    pub fn policy(&self) -> &TacticPolicy {
        self.policy
    }

    pub fn eval(&mut self, state: &ProofState) -> Rc<Evaluation> {
        if let Some(e) = self.cache.get(&state.goals) {
            return Rc::clone(e);
        }
        if self.cache.len() >= self.capacity {
            self.cache.clear();
        }
        let e = Rc::new(self.policy.evaluate(state));
        self.cache.insert(state.goals.clone(), Rc::clone(&e));
        e
    }
}

/// The `i`-th successor of `parent` as listed in `eval`, with a step count
/// derived from `parent` rather than from whichever state filled the cache.
fn child_of(parent: &ProofState, eval: &Evaluation, i: usize) -> ProofState {
    ProofState {
        goals: eval.actions.successors[i].goals.clone(),
        steps: parent.steps + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_growth() {
        let b = SearchBudget::new(1000, 10, 60.0, 100);
        let g = b.grown(2, 0.5, 30.0);
        assert_eq!(g.max_expansions, 225);
        assert_eq!(g.wall_clock_secs, 120.0);
        assert_eq!(g.max_simulations, 1000);
        assert!(b.validate().is_ok());
        assert!(SearchBudget::new(0, 10, 60.0, 100).validate().is_err());
        assert!(SearchBudget::new(1, 10, 0.0, 100).validate().is_err());
    }

    #[test]
    fn outcome_wire_names() {
        assert_eq!(serde_json::to_string(&Outcome::BudgetHit).unwrap(), "\"budget-hit\"");
        assert_eq!(serde_json::to_string(&Outcome::Proved).unwrap(), "\"proved\"");
    }
}
