//! A small deterministic equational calculus over `(ℕ, +, ×, 0, S)`.
//!
//! A [`ProofState`] is an ordered list of equational goals. Tactics only
//! touch the first goal; rewrites keep the goal count and `refl` is the
//! only way a goal is discharged. States with open goals and no applicable
//! tactic are stuck, which is a legal terminal outcome rather than an error.

mod state;
pub mod syntax;
mod tactic;
mod term;

pub use state::{Goal, Hypothesis, ProofState};
pub use syntax::{parse_equation, parse_infix};
pub use tactic::{Position, Rule, Side, Tactic, TacticKind};
pub use term::{NodeKind, Term, MAX_NUMERAL};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("tactic {tactic} is not applicable: {reason}")]
    InapplicableTactic { tactic: String, reason: String },
    #[error("no open goals")]
    NoOpenGoals,
    #[error("position {0} is outside the goal")]
    InvalidPosition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub fn apply_tactic(state: &ProofState, tactic: &Tactic) -> Result<ProofState, KernelError> {
    state.apply(tactic)
}

pub fn enumerate_tactics(state: &ProofState) -> Vec<Tactic> {
    state.enumerate_tactics()
}

pub fn is_proved(state: &ProofState) -> bool {
    state.is_proved()
}
