use std::fmt;
use std::sync::Arc;

/// Expressions over the naturals: variables, `0`, successor, `+` and `*`.
///
/// Arity is fixed by the variant, so an ill-formed node cannot be built.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Arc<str>),
    Zero,
    Succ(Box<Term>),
    Add(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Var,
    Zero,
    Succ,
    Add,
    Mul,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Var,
        NodeKind::Zero,
        NodeKind::Succ,
        NodeKind::Add,
        NodeKind::Mul,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Largest value `simp_arith` will fold into a numeral.
pub const MAX_NUMERAL: u64 = 16;

impl Term {
    pub fn var(name: impl Into<Arc<str>>) -> Term {
        Term::Var(name.into())
    }

    pub fn succ(t: Term) -> Term {
        Term::Succ(Box::new(t))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(Box::new(a), Box::new(b))
    }

    /// `succ^n 0`.
    pub fn numeral(n: u64) -> Term {
        (0..n).fold(Term::Zero, |t, _| Term::succ(t))
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Term::Var(_) => NodeKind::Var,
            Term::Zero => NodeKind::Zero,
            Term::Succ(_) => NodeKind::Succ,
            Term::Add(..) => NodeKind::Add,
            Term::Mul(..) => NodeKind::Mul,
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Var(_) | Term::Zero => vec![],
            Term::Succ(a) => vec![a],
            Term::Add(a, b) | Term::Mul(a, b) => vec![a, b],
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Zero => 1,
            Term::Succ(a) => 1 + a.size(),
            Term::Add(a, b) | Term::Mul(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Zero => 1,
            Term::Succ(a) => 1 + a.depth(),
            Term::Add(a, b) | Term::Mul(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Zero => true,
            Term::Succ(a) => a.is_ground(),
            Term::Add(a, b) | Term::Mul(a, b) => a.is_ground() && b.is_ground(),
        }
    }

    /// Value of `succ^n 0`, or `None` for anything else.
    pub fn as_numeral(&self) -> Option<u64> {
        match self {
            Term::Zero => Some(0),
            Term::Succ(a) => a.as_numeral().map(|n| n + 1),
            _ => None,
        }
    }

    /// Evaluates a variable-free term, giving up above `limit`.
    pub fn eval_ground(&self, limit: u64) -> Option<u64> {
        let v = match self {
            Term::Var(_) => return None,
            Term::Zero => 0,
            Term::Succ(a) => a.eval_ground(limit)? + 1,
            Term::Add(a, b) => a.eval_ground(limit)?.checked_add(b.eval_ground(limit)?)?,
            Term::Mul(a, b) => a.eval_ground(limit)?.checked_mul(b.eval_ground(limit)?)?,
        };
        (v <= limit).then_some(v)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.kind_counts()[kind.index()]
    }

    /// Node counts indexed by `NodeKind::index`.
    pub fn kind_counts(&self) -> [usize; 5] {
        let mut out = [0; 5];
        self.add_kind_counts(&mut out);
        out
    }

    fn add_kind_counts(&self, out: &mut [usize; 5]) {
        out[self.kind().index()] += 1;
        match self {
            Term::Var(_) | Term::Zero => {}
            Term::Succ(a) => a.add_kind_counts(out),
            Term::Add(a, b) | Term::Mul(a, b) => {
                a.add_kind_counts(out);
                b.add_kind_counts(out);
            }
        }
    }

    pub fn at(&self, path: &[u8]) -> Option<&Term> {
        let Some((&first, rest)) = path.split_first() else {
            return Some(self);
        };
        let child = match (self, first) {
            (Term::Succ(a), 0) => a,
            (Term::Add(a, _) | Term::Mul(a, _), 0) => a,
            (Term::Add(_, b) | Term::Mul(_, b), 1) => b,
            _ => return None,
        };
        child.at(rest)
    }

    /// Copy of `self` with the subterm at `path` replaced, or `None` if the
    /// path leaves the term.
    pub fn replace_at(&self, path: &[u8], new: Term) -> Option<Term> {
        let Some((&first, rest)) = path.split_first() else {
            return Some(new);
        };
        Some(match (self, first) {
            (Term::Succ(a), 0) => Term::succ(a.replace_at(rest, new)?),
            (Term::Add(a, b), 0) => Term::Add(Box::new(a.replace_at(rest, new)?), b.clone()),
            (Term::Add(a, b), 1) => Term::Add(a.clone(), Box::new(b.replace_at(rest, new)?)),
            (Term::Mul(a, b), 0) => Term::Mul(Box::new(a.replace_at(rest, new)?), b.clone()),
            (Term::Mul(a, b), 1) => Term::Mul(a.clone(), Box::new(b.replace_at(rest, new)?)),
            _ => return None,
        })
    }

    /// Every position in preorder, root first.
    pub fn positions(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::with_capacity(self.size());
        let mut path = Vec::new();
        self.collect_positions(&mut path, &mut out);
        out
    }

    fn collect_positions(&self, path: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        out.push(path.clone());
        for (i, c) in self.children().into_iter().enumerate() {
            path.push(i as u8);
            c.collect_positions(path, out);
            path.pop();
        }
    }

    /// Preorder walk yielding each subterm with its position.
    pub fn subterms(&self) -> Vec<(Vec<u8>, &Term)> {
        self.positions()
            .into_iter()
            .map(|p| {
                let t = self.at(&p).expect("position produced by walk");
                (p, t)
            })
            .collect()
    }

    /// Structural hash that is stable across runs and platforms.
    pub fn stable_hash(&self) -> u64 {
        self.subterm_hashes(&mut Vec::new())
    }

    /// Pushes the stable hash of every subterm (postorder) and returns the
    /// root's.
    pub fn subterm_hashes(&self, out: &mut Vec<u64>) -> u64 {
        let mut h = crate::hashing::Fnv::new();
        h.write_u8(self.kind() as u8);
        match self {
            Term::Var(v) => h.write(v.as_bytes()),
            Term::Zero => {}
            Term::Succ(a) => h.write_u64(a.subterm_hashes(out)),
            Term::Add(a, b) | Term::Mul(a, b) => {
                h.write_u64(a.subterm_hashes(out));
                h.write_u64(b.subterm_hashes(out));
            }
        }
        let v = h.finish();
        out.push(v);
        v
    }
}

/// Prefix notation: `a`, `0`, `(S t)`, `(+ t u)`, `(* t u)`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Zero => f.write_str("0"),
            Term::Succ(a) => write!(f, "(S {a})"),
            Term::Add(a, b) => write!(f, "(+ {a} {b})"),
            Term::Mul(a, b) => write!(f, "(* {a} {b})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Term {
        Term::add(Term::add(Term::var("a"), Term::var("b")), Term::var("c"))
    }

    #[test]
    fn positions_are_preorder() {
        let t = abc();
        assert_eq!(
            t.positions(),
            vec![vec![], vec![0], vec![0, 0], vec![0, 1], vec![1]]
        );
        assert_eq!(t.at(&[0, 1]), Some(&Term::var("b")));
        assert_eq!(t.at(&[1, 0]), None);
    }

    #[test]
    fn replace_outside_term_fails() {
        let t = abc();
        assert!(t.replace_at(&[2], Term::Zero).is_none());
        let r = t.replace_at(&[0, 0], Term::Zero).unwrap();
        assert_eq!(r.to_string(), "(+ (+ 0 b) c)");
    }

    #[test]
    fn numerals_and_ground_eval() {
        assert_eq!(Term::numeral(3).as_numeral(), Some(3));
        let t = Term::mul(Term::numeral(2), Term::add(Term::numeral(1), Term::numeral(2)));
        assert_eq!(t.eval_ground(MAX_NUMERAL), Some(6));
        assert_eq!(t.eval_ground(5), None);
        assert_eq!(abc().eval_ground(100), None);
    }

    #[test]
    fn stable_hash_distinguishes_shape() {
        let a = Term::add(Term::var("a"), Term::var("b"));
        let b = Term::add(Term::var("b"), Term::var("a"));
        let c = Term::mul(Term::var("a"), Term::var("b"));
        assert_ne!(a.stable_hash(), b.stable_hash());
        assert_ne!(a.stable_hash(), c.stable_hash());
        assert_eq!(a.stable_hash(), a.clone().stable_hash());
    }
}
