use std::fmt;
use std::sync::Arc;

use super::tactic::{Position, Rule, Side, Tactic};
use super::term::Term;
use super::KernelError;

/// A named equation usable by `apply_hyp`, oriented left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypothesis {
    pub name: String,
    pub lhs: Term,
    pub rhs: Term,
}

/// An equation to prove under a list of hypotheses. Hypotheses never
/// change during a proof, so goals share them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Goal {
    pub lhs: Term,
    pub rhs: Term,
    pub hyps: Arc<[Hypothesis]>,
}

impl Goal {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        Goal {
            lhs,
            rhs,
            hyps: Arc::from([]),
        }
    }

    pub fn with_hyps(mut self, hyps: Vec<Hypothesis>) -> Self {
        self.hyps = hyps.into();
        self
    }

    pub fn side(&self, side: Side) -> &Term {
        match side {
            Side::Lhs => &self.lhs,
            Side::Rhs => &self.rhs,
        }
    }

    pub fn hyp(&self, name: &str) -> Option<&Hypothesis> {
        self.hyps.iter().find(|h| h.name == name)
    }

    pub fn at(&self, pos: &Position) -> Option<&Term> {
        self.side(pos.side).at(&pos.path)
    }

    /// Copy with the subterm at `pos` replaced.
    pub fn replace_at(&self, pos: &Position, new: Term) -> Option<Goal> {
        let (lhs, rhs) = match pos.side {
            Side::Lhs => (self.lhs.replace_at(&pos.path, new)?, self.rhs.clone()),
            Side::Rhs => (self.lhs.clone(), self.rhs.replace_at(&pos.path, new)?),
        };
        Some(Goal {
            lhs,
            rhs,
            hyps: Arc::clone(&self.hyps),
        })
    }
}

/// Open goals plus the number of tactics applied so far. An empty goal
/// list is the "no goals" state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProofState {
    pub goals: Vec<Goal>,
    pub steps: u32,
}

impl ProofState {
    pub fn new(goals: Vec<Goal>) -> Self {
        ProofState { goals, steps: 0 }
    }

    pub fn single(goal: Goal) -> Self {
        ProofState::new(vec![goal])
    }

    pub fn is_proved(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn first_goal(&self) -> Option<&Goal> {
        self.goals.first()
    }

    /// Applies `tactic` to the first goal.
    pub fn apply(&self, tactic: &Tactic) -> Result<ProofState, KernelError> {
        let goal = self.first_goal().ok_or(KernelError::NoOpenGoals)?;
        let inapplicable = |reason: &str| KernelError::InapplicableTactic {
            tactic: tactic.to_string(),
            reason: reason.to_string(),
        };
        let replaced = match tactic {
            Tactic::Refl => {
                if goal.lhs != goal.rhs {
                    return Err(inapplicable("sides differ"));
                }
                None
            }
            Tactic::Rewrite { rule, at } => {
                let sub = goal
                    .at(at)
                    .ok_or_else(|| KernelError::InvalidPosition(at.to_string()))?;
                let new = rule
                    .apply(sub)
                    .ok_or_else(|| inapplicable("pattern does not match"))?;
                Some(goal.replace_at(at, new).expect("position checked above"))
            }
            Tactic::ApplyHyp { name, at } => {
                let hyp = goal
                    .hyp(name)
                    .ok_or_else(|| inapplicable("unknown hypothesis"))?;
                let sub = goal
                    .at(at)
                    .ok_or_else(|| KernelError::InvalidPosition(at.to_string()))?;
                if *sub != hyp.lhs {
                    return Err(inapplicable("hypothesis lhs does not match"));
                }
                Some(
                    goal.replace_at(at, hyp.rhs.clone())
                        .expect("position checked above"),
                )
            }
        };
        let mut goals = Vec::with_capacity(self.goals.len());
        goals.extend(replaced);
        goals.extend(self.goals[1..].iter().cloned());
        Ok(ProofState {
            goals,
            steps: self.steps + 1,
        })
    }

    /// Every applicable tactic for the first goal, paired with its result.
    ///
    /// Order: `refl`, then lhs positions before rhs positions (preorder),
    /// rules in declaration order, then hypotheses in declaration order.
    pub fn successors(&self) -> Vec<(Tactic, ProofState)> {
        let Some(goal) = self.first_goal() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let next = |g: Option<Goal>| {
            let mut goals = Vec::with_capacity(self.goals.len());
            goals.extend(g);
            goals.extend(self.goals[1..].iter().cloned());
            ProofState {
                goals,
                steps: self.steps + 1,
            }
        };
        if goal.lhs == goal.rhs {
            out.push((Tactic::Refl, next(None)));
        }
        for side in [Side::Lhs, Side::Rhs] {
            for (path, sub) in goal.side(side).subterms() {
                for rule in Rule::ALL {
                    if let Some(new) = rule.apply(sub) {
                        let at = Position::new(side, path.clone());
                        let g = goal.replace_at(&at, new).expect("walked position");
                        out.push((Tactic::Rewrite { rule, at }, next(Some(g))));
                    }
                }
                for hyp in goal.hyps.iter() {
                    if *sub == hyp.lhs {
                        let at = Position::new(side, path.clone());
                        let g = goal.replace_at(&at, hyp.rhs.clone()).expect("walked position");
                        let tactic = Tactic::ApplyHyp {
                            name: hyp.name.clone(),
                            at,
                        };
                        out.push((tactic, next(Some(g))));
                    }
                }
            }
        }
        out
    }

    pub fn enumerate_tactics(&self) -> Vec<Tactic> {
        self.successors().into_iter().map(|(t, _)| t).collect()
    }

    /// Open goals but nothing applies.
    pub fn is_stuck(&self) -> bool {
        !self.is_proved() && self.successors().is_empty()
    }

    /// Replays `proof` from `self`, returning the final state.
    pub fn replay<'a>(
        &self,
        proof: impl IntoIterator<Item = &'a Tactic>,
    ) -> Result<ProofState, KernelError> {
        proof
            .into_iter()
            .try_fold(self.clone(), |s, t| s.apply(t))
    }

    /// True iff `proof` replays from `self` to "no goals".
    pub fn check_proof<'a>(&self, proof: impl IntoIterator<Item = &'a Tactic>) -> bool {
        self.replay(proof).map(|s| s.is_proved()).unwrap_or(false)
    }

    /// Canonical key ignoring the step counter.
    pub fn goals_key(&self) -> String {
        let mut s = String::new();
        for g in &self.goals {
            s.push_str(&g.to_string());
        }
        s
    }
}

/// `(goal (hyps (h0 t u) ...) lhs rhs)`
impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(goal (hyps")?;
        for h in self.hyps.iter() {
            write!(f, " ({} {} {})", h.name, h.lhs, h.rhs)?;
        }
        write!(f, ") {} {})", self.lhs, self.rhs)
    }
}

/// `(state steps goal ...)`
impl fmt::Display for ProofState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(state {}", self.steps)?;
        for g in &self.goals {
            write!(f, " {g}")?;
        }
        f.write_str(")")
    }
}
