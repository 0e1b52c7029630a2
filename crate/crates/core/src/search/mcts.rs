//! Monte Carlo tree search with PUCT selection over policy priors.
//!
//! Reward is binary and a found proof ends the attempt at once, so every
//! backed-up value is 0 and selection is driven by priors and visit counts.

use std::rc::Rc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{child_of, Evaluator, Outcome, SearchBudget, SearchResult};
use crate::kernel::{ProofState, Tactic};
use crate::policy::{draw, Evaluation, TacticPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MctsConfig {
    /// Exploration constant in the PUCT bonus.
    pub puct: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig { puct: 1.0 }
    }
}

struct Node {
    state: ProofState,
    depth: u32,
    eval: Rc<Evaluation>,
    priors: Vec<f64>,
    children: Vec<Option<usize>>,
    edge_visits: Vec<u32>,
    edge_value: Vec<f64>,
    dead: Vec<bool>,
    visits: u32,
    parent: Option<(usize, usize)>,
}

impl Node {
    fn new(state: ProofState, depth: u32, eval: Rc<Evaluation>, parent: Option<(usize, usize)>) -> Self {
        let n = eval.actions.len();
        Node {
            priors: eval.probs(),
            state,
            depth,
            eval,
            children: vec![None; n],
            edge_visits: vec![0; n],
            edge_value: vec![0.0; n],
            dead: vec![false; n],
            visits: 0,
            parent,
        }
    }

    fn all_dead(&self) -> bool {
        self.dead.iter().all(|&d| d)
    }
}

/// One MCTS attempt. Kept as a value so tests can inspect the tree.
pub struct Mcts<'e, 'p> {
    evaluator: &'e mut Evaluator<'p>,
    budget: SearchBudget,
    config: MctsConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    expansions: u64,
    simulations: u32,
}

enum Step {
    Continue,
    Proved(Vec<Tactic>),
    OutOfBudget,
}

impl<'e, 'p> Mcts<'e, 'p> {
    pub fn new(evaluator: &'e mut Evaluator<'p>, budget: SearchBudget, config: MctsConfig, seed: u64) -> Self {
        Mcts {
            evaluator,
            budget,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            expansions: 0,
            simulations: 0,
        }
    }

    /// Visit counts of the root's outgoing edges.
    pub fn root_visits(&self) -> Vec<u32> {
        self.nodes
            .first()
            .map(|n| n.edge_visits.clone())
            .unwrap_or_default()
    }

    pub fn simulations(&self) -> u32 {
        self.simulations
    }

    pub fn run(&mut self, start: &ProofState) -> SearchResult {
        let started = Instant::now();
        let done = |me: &Self, outcome, proof| {
            SearchResult::finish(outcome, proof, me.expansions, me.simulations, started)
        };
        if start.is_proved() {
            return done(self, Outcome::Proved, Vec::new());
        }
        let eval = self.evaluator.eval(start);
        if eval.actions.is_empty() {
            return done(self, Outcome::Exhausted, Vec::new());
        }
        if self.budget.max_expansions == 0 {
            return done(self, Outcome::BudgetHit, Vec::new());
        }
        self.expansions = 1;
        self.nodes.push(Node::new(start.clone(), 0, eval, None));

        loop {
            if self.nodes[0].all_dead() {
                return done(self, Outcome::Exhausted, Vec::new());
            }
            if self.simulations >= self.budget.max_simulations
                || started.elapsed().as_secs_f64() > self.budget.wall_clock_secs
            {
                return done(self, Outcome::BudgetHit, Vec::new());
            }
            match self.simulate() {
                Step::Continue => {}
                Step::Proved(proof) => {
                    debug_assert!(start.check_proof(&proof));
                    return done(self, Outcome::Proved, proof);
                }
                Step::OutOfBudget => return done(self, Outcome::BudgetHit, Vec::new()),
            }
        }
    }

    fn select(&self, id: usize) -> usize {
        let node = &self.nodes[id];
        let sqrt_n = ((node.visits + 1) as f64).sqrt();
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for e in 0..node.priors.len() {
            if node.dead[e] {
                continue;
            }
            let n = node.edge_visits[e];
            let q = if n > 0 { node.edge_value[e] / n as f64 } else { 0.0 };
            let u = self.config.puct * node.priors[e] * sqrt_n / (1.0 + n as f64);
            if q + u > best_score {
                best_score = q + u;
                best = Some(e);
            }
        }
        best.expect("selection only visits nodes with a live edge")
    }

    fn mark_dead(&mut self, id: usize, edge: usize) {
        let mut cur = Some((id, edge));
        while let Some((n, e)) = cur {
            self.nodes[n].dead[e] = true;
            cur = if self.nodes[n].all_dead() {
                self.nodes[n].parent
            } else {
                None
            };
        }
    }

    fn path_tactics(&self, path: &[(usize, usize)]) -> Vec<Tactic> {
        path.iter()
            .map(|&(n, e)| self.nodes[n].eval.actions.tactics[e].clone())
            .collect()
    }

    fn backup(&mut self, path: &[(usize, usize)], reward: f64) {
        for &(n, e) in path {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.edge_visits[e] += 1;
            node.edge_value[e] += reward;
        }
        self.simulations += 1;
    }

    fn simulate(&mut self) -> Step {
        let mut path = Vec::new();
        let mut id = 0;
        let (leaf, edge) = loop {
            let e = self.select(id);
            path.push((id, e));
            match self.nodes[id].children[e] {
                Some(c) => id = c,
                None => break (id, e),
            }
        };

        let child = child_of(&self.nodes[leaf].state, &self.nodes[leaf].eval, edge);
        if child.is_proved() {
            return Step::Proved(self.path_tactics(&path));
        }
        let depth = self.nodes[leaf].depth + 1;
        if depth >= self.budget.max_depth {
            self.mark_dead(leaf, edge);
            self.backup(&path, 0.0);
            return Step::Continue;
        }
        let eval = self.evaluator.eval(&child);
        if eval.actions.is_empty() {
            self.mark_dead(leaf, edge);
            self.backup(&path, 0.0);
            return Step::Continue;
        }
        if self.expansions >= self.budget.max_expansions {
            return Step::OutOfBudget;
        }
        self.expansions += 1;
        let cid = self.nodes.len();
        self.nodes
            .push(Node::new(child.clone(), depth, Rc::clone(&eval), Some((leaf, edge))));
        self.nodes[leaf].children[edge] = Some(cid);

        // Rollout by sampling the policy until proved, stuck, or out of depth.
        let mut tail = Vec::new();
        let mut state = child;
        let mut eval = eval;
        let mut d = depth;
        loop {
            let i = draw(&eval.probs(), &mut self.rng);
            tail.push(eval.actions.tactics[i].clone());
            state = child_of(&state, &eval, i);
            d += 1;
            if state.is_proved() {
                let mut proof = self.path_tactics(&path);
                proof.extend(tail);
                return Step::Proved(proof);
            }
            if d >= self.budget.max_depth || self.expansions >= self.budget.max_expansions {
                break;
            }
            eval = self.evaluator.eval(&state);
            if eval.actions.is_empty() {
                break;
            }
            self.expansions += 1;
        }
        self.backup(&path, 0.0);
        Step::Continue
    }
}

/// One seeded MCTS proof attempt from `start`.
pub fn mcts_attempt(policy: &TacticPolicy, start: &ProofState, budget: SearchBudget, seed: u64) -> SearchResult {
    let mut ev = Evaluator::new(policy);
    Mcts::new(&mut ev, budget, MctsConfig::default(), seed).run(start)
}
