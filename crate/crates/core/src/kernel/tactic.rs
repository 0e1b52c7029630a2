use std::fmt;

use super::term::{Term, MAX_NUMERAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lhs,
    Rhs,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Lhs => Side::Rhs,
            Side::Rhs => Side::Lhs,
        }
    }
}

/// A subterm address inside the first goal: which side of the equation,
/// then child indices from that side's root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub side: Side,
    pub path: Vec<u8>,
}

impl Position {
    pub fn new(side: Side, path: impl Into<Vec<u8>>) -> Self {
        Position {
            side,
            path: path.into(),
        }
    }

    pub fn lhs_root() -> Self {
        Position::new(Side::Lhs, vec![])
    }

    pub fn rhs_root() -> Self {
        Position::new(Side::Rhs, vec![])
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

/// `l`, `r`, `l.0.1`, ...
impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.side {
            Side::Lhs => "l",
            Side::Rhs => "r",
        })?;
        for step in &self.path {
            write!(f, ".{step}")?;
        }
        Ok(())
    }
}

/// Positional rewrite rules. Each rewrites the subterm rooted at the
/// tactic's position and never looks above it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// `a + b → b + a`
    CommAdd,
    /// `(a + b) + c → a + (b + c)`
    AssocAdd,
    /// `0 + a → a`
    ZeroAdd,
    /// `a + 0 → a`
    AddZero,
    /// `a * b → b * a`
    CommMul,
    /// `S 0 * a → a`
    OneMul,
    /// `S a + b → S (a + b)`
    SuccAdd,
    /// folds a variable-free `+`/`*` node into its numeral
    SimpArith,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::CommAdd,
        Rule::AssocAdd,
        Rule::ZeroAdd,
        Rule::AddZero,
        Rule::CommMul,
        Rule::OneMul,
        Rule::SuccAdd,
        Rule::SimpArith,
    ];

    /// Rewrites `t` at its root, or `None` if the pattern does not match.
    pub fn apply(self, t: &Term) -> Option<Term> {
        match (self, t) {
            (Rule::CommAdd, Term::Add(a, b)) => Some(Term::Add(b.clone(), a.clone())),
            (Rule::AssocAdd, Term::Add(ab, c)) => match ab.as_ref() {
                Term::Add(a, b) => Some(Term::add(
                    a.as_ref().clone(),
                    Term::Add(b.clone(), c.clone()),
                )),
                _ => None,
            },
            (Rule::ZeroAdd, Term::Add(z, a)) if **z == Term::Zero => Some(a.as_ref().clone()),
            (Rule::AddZero, Term::Add(a, z)) if **z == Term::Zero => Some(a.as_ref().clone()),
            (Rule::CommMul, Term::Mul(a, b)) => Some(Term::Mul(b.clone(), a.clone())),
            (Rule::OneMul, Term::Mul(one, a)) if one.as_numeral() == Some(1) => {
                Some(a.as_ref().clone())
            }
            (Rule::SuccAdd, Term::Add(sa, b)) => match sa.as_ref() {
                Term::Succ(a) => Some(Term::succ(Term::Add(a.clone(), b.clone()))),
                _ => None,
            },
            (Rule::SimpArith, Term::Add(..) | Term::Mul(..)) => {
                t.eval_ground(MAX_NUMERAL).map(Term::numeral)
            }
            _ => None,
        }
    }

    pub fn kind(self) -> TacticKind {
        match self {
            Rule::CommAdd => TacticKind::RwCommAdd,
            Rule::AssocAdd => TacticKind::RwAssocAdd,
            Rule::ZeroAdd => TacticKind::RwZeroAdd,
            Rule::AddZero => TacticKind::RwAddZero,
            Rule::CommMul => TacticKind::RwCommMul,
            Rule::OneMul => TacticKind::RwOneMul,
            Rule::SuccAdd => TacticKind::RwSuccAdd,
            Rule::SimpArith => TacticKind::SimpArith,
        }
    }
}

/// The ten tactic kinds of the calculus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TacticKind {
    Refl,
    RwCommAdd,
    RwAssocAdd,
    RwZeroAdd,
    RwAddZero,
    RwCommMul,
    RwOneMul,
    RwSuccAdd,
    ApplyHyp,
    SimpArith,
}

impl TacticKind {
    pub const ALL: [TacticKind; 10] = [
        TacticKind::Refl,
        TacticKind::RwCommAdd,
        TacticKind::RwAssocAdd,
        TacticKind::RwZeroAdd,
        TacticKind::RwAddZero,
        TacticKind::RwCommMul,
        TacticKind::RwOneMul,
        TacticKind::RwSuccAdd,
        TacticKind::ApplyHyp,
        TacticKind::SimpArith,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TacticKind::Refl => "refl",
            TacticKind::RwCommAdd => "rw_comm_add",
            TacticKind::RwAssocAdd => "rw_assoc_add",
            TacticKind::RwZeroAdd => "rw_zero_add",
            TacticKind::RwAddZero => "rw_add_zero",
            TacticKind::RwCommMul => "rw_comm_mul",
            TacticKind::RwOneMul => "rw_one_mul",
            TacticKind::RwSuccAdd => "rw_succ_add",
            TacticKind::ApplyHyp => "apply_hyp",
            TacticKind::SimpArith => "simp_arith",
        }
    }

    pub fn from_name(name: &str) -> Option<TacticKind> {
        TacticKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn rule(self) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.kind() == self)
    }
}

/// One proof step. Everything but `Refl` is addressed to a position of the
/// first goal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tactic {
    Refl,
    Rewrite { rule: Rule, at: Position },
    ApplyHyp { name: String, at: Position },
}

impl Tactic {
    pub fn rewrite(rule: Rule, at: Position) -> Tactic {
        Tactic::Rewrite { rule, at }
    }

    pub fn kind(&self) -> TacticKind {
        match self {
            Tactic::Refl => TacticKind::Refl,
            Tactic::Rewrite { rule, .. } => rule.kind(),
            Tactic::ApplyHyp { .. } => TacticKind::ApplyHyp,
        }
    }

    pub fn position(&self) -> Option<&Position> {
        match self {
            Tactic::Refl => None,
            Tactic::Rewrite { at, .. } | Tactic::ApplyHyp { at, .. } => Some(at),
        }
    }
}

/// `(refl)`, `(rw_comm_add l.0)`, `(apply_hyp h0 r.1)`.
impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tactic::Refl => f.write_str("(refl)"),
            Tactic::Rewrite { rule, at } => write!(f, "({} {at})", rule.kind().name()),
            Tactic::ApplyHyp { name, at } => write!(f, "(apply_hyp {name} {at})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Term {
        Term::var(n)
    }

    #[test]
    fn rule_patterns() {
        let ab = Term::add(v("a"), v("b"));
        assert_eq!(Rule::CommAdd.apply(&ab), Some(Term::add(v("b"), v("a"))));
        assert_eq!(Rule::AssocAdd.apply(&ab), None);
        let abc = Term::add(ab.clone(), v("c"));
        assert_eq!(
            Rule::AssocAdd.apply(&abc),
            Some(Term::add(v("a"), Term::add(v("b"), v("c"))))
        );
        assert_eq!(Rule::ZeroAdd.apply(&Term::add(Term::Zero, v("a"))), Some(v("a")));
        assert_eq!(Rule::AddZero.apply(&Term::add(v("a"), Term::Zero)), Some(v("a")));
        assert_eq!(
            Rule::OneMul.apply(&Term::mul(Term::numeral(1), v("a"))),
            Some(v("a"))
        );
        assert_eq!(Rule::OneMul.apply(&Term::mul(Term::numeral(2), v("a"))), None);
        assert_eq!(
            Rule::SuccAdd.apply(&Term::add(Term::succ(v("a")), v("b"))),
            Some(Term::succ(Term::add(v("a"), v("b"))))
        );
        assert_eq!(
            Rule::SimpArith.apply(&Term::add(Term::numeral(2), Term::numeral(1))),
            Some(Term::numeral(3))
        );
        assert_eq!(Rule::SimpArith.apply(&Term::numeral(3)), None);
        assert_eq!(Rule::SimpArith.apply(&Term::add(v("a"), Term::Zero)), None);
    }

    #[test]
    fn kinds_cover_vocabulary() {
        assert_eq!(TacticKind::ALL.len(), 10);
        for k in TacticKind::ALL {
            assert_eq!(TacticKind::from_name(k.name()), Some(k));
        }
        for r in Rule::ALL {
            assert_eq!(r.kind().rule(), Some(r));
        }
    }

    #[test]
    fn tactic_display() {
        let t = Tactic::rewrite(Rule::CommAdd, Position::new(Side::Lhs, vec![0, 1]));
        assert_eq!(t.to_string(), "(rw_comm_add l.0.1)");
        let h = Tactic::ApplyHyp {
            name: "h0".into(),
            at: Position::rhs_root(),
        };
        assert_eq!(h.to_string(), "(apply_hyp h0 r)");
        assert_eq!(Tactic::Refl.to_string(), "(refl)");
    }
}
