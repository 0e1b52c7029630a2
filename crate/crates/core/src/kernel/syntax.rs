//! Parsers for the canonical prefix syntax and a small infix syntax.
//!
//! Canonical (prefix) grammar, as written by the `Display` impls:
//!
//! ```text
//! term   := var | "0" | "(S" term ")" | "(+" term term ")" | "(*" term term ")"
//! var    := [a-z][a-z0-9_]*
//! goal   := "(goal (hyps" hyp* ")" term term ")"
//! hyp    := "(" var term term ")"
//! state  := "(state" nat goal* ")"
//! pos    := ("l" | "r") ("." nat)*
//! tactic := "(refl)" | "(" rule pos ")" | "(apply_hyp" var pos ")"
//! rule   := rw_comm_add | rw_assoc_add | rw_zero_add | rw_add_zero
//!         | rw_comm_mul | rw_one_mul | rw_succ_add | simp_arith
//! ```
//!
//! Tokens are separated by single spaces in canonical output; the parser
//! accepts any whitespace.
//!
//! Infix syntax (for humans): `a + b * (c + 0) = S(a) + 2`, with `*`
//! binding tighter than `+`, both left-associative, and decimal literals
//! standing for numerals.

use std::str::FromStr;

use super::state::{Goal, Hypothesis, ProofState};
use super::tactic::{Position, Side, Tactic, TacticKind};
use super::term::Term;
use super::KernelError;

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn err(msg: impl Into<String>) -> KernelError {
    KernelError::Parse(msg.into())
}

fn tokenize(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in src.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_sexp(src: &str) -> Result<Sexp, KernelError> {
    let tokens = tokenize(src);
    let mut pos = 0;
    let sexp = sexp_at(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(err(format!("trailing input after position {pos}")));
    }
    Ok(sexp)
}

fn sexp_at(tokens: &[String], pos: &mut usize) -> Result<Sexp, KernelError> {
    let tok = tokens.get(*pos).ok_or_else(|| err("unexpected end of input"))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(sexp_at(tokens, pos)?),
                    None => return Err(err("unclosed parenthesis")),
                }
            }
        }
        ")" => Err(err("unexpected ')'")),
        atom => Ok(Sexp::Atom(atom.to_string())),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn term_of(s: &Sexp) -> Result<Term, KernelError> {
    match s {
        Sexp::Atom(a) if a == "0" => Ok(Term::Zero),
        Sexp::Atom(a) if is_ident(a) => Ok(Term::var(a.as_str())),
        Sexp::Atom(a) => Err(err(format!("bad term atom `{a}`"))),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), a] if op == "S" => Ok(Term::succ(term_of(a)?)),
            [Sexp::Atom(op), a, b] if op == "+" => Ok(Term::add(term_of(a)?, term_of(b)?)),
            [Sexp::Atom(op), a, b] if op == "*" => Ok(Term::mul(term_of(a)?, term_of(b)?)),
            _ => Err(err("malformed term")),
        },
    }
}

fn goal_of(s: &Sexp) -> Result<Goal, KernelError> {
    let Sexp::List(items) = s else {
        return Err(err("goal must be a list"));
    };
    match items.as_slice() {
        [Sexp::Atom(tag), Sexp::List(hyps), lhs, rhs] if tag == "goal" => {
            let (head, rest) = hyps.split_first().ok_or_else(|| err("missing hyps"))?;
            if *head != Sexp::Atom("hyps".into()) {
                return Err(err("expected (hyps ...)"));
            }
            let hyps = rest
                .iter()
                .map(|h| match h {
                    Sexp::List(parts) => match parts.as_slice() {
                        [Sexp::Atom(name), l, r] if is_ident(name) => Ok(Hypothesis {
                            name: name.clone(),
                            lhs: term_of(l)?,
                            rhs: term_of(r)?,
                        }),
                        _ => Err(err("malformed hypothesis")),
                    },
                    _ => Err(err("malformed hypothesis")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Goal::new(term_of(lhs)?, term_of(rhs)?).with_hyps(hyps))
        }
        _ => Err(err("malformed goal")),
    }
}

fn state_of(s: &Sexp) -> Result<ProofState, KernelError> {
    let Sexp::List(items) = s else {
        return Err(err("state must be a list"));
    };
    match items.as_slice() {
        [Sexp::Atom(tag), Sexp::Atom(steps), goals @ ..] if tag == "state" => {
            let steps = steps.parse().map_err(|_| err("bad step count"))?;
            let goals = goals.iter().map(goal_of).collect::<Result<_, _>>()?;
            Ok(ProofState { goals, steps })
        }
        _ => Err(err("malformed state")),
    }
}

impl FromStr for Position {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('.');
        let side = match parts.next() {
            Some("l") => Side::Lhs,
            Some("r") => Side::Rhs,
            _ => return Err(err(format!("bad position `{s}`"))),
        };
        let path = parts
            .map(|p| match p {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(err(format!("bad position step `{p}`"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(Position::new(side, path))
    }
}

fn tactic_of(s: &Sexp) -> Result<Tactic, KernelError> {
    let Sexp::List(items) = s else {
        return Err(err("tactic must be a list"));
    };
    match items.as_slice() {
        [Sexp::Atom(k)] if k == "refl" => Ok(Tactic::Refl),
        [Sexp::Atom(k), Sexp::Atom(name), Sexp::Atom(pos)] if k == "apply_hyp" => {
            Ok(Tactic::ApplyHyp {
                name: name.clone(),
                at: pos.parse()?,
            })
        }
        [Sexp::Atom(k), Sexp::Atom(pos)] => {
            let rule = TacticKind::from_name(k)
                .and_then(TacticKind::rule)
                .ok_or_else(|| err(format!("unknown rewrite `{k}`")))?;
            Ok(Tactic::Rewrite {
                rule,
                at: pos.parse()?,
            })
        }
        _ => Err(err("malformed tactic")),
    }
}

impl FromStr for Term {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        term_of(&parse_sexp(s)?)
    }
}

impl FromStr for Goal {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        goal_of(&parse_sexp(s)?)
    }
}

impl FromStr for ProofState {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        state_of(&parse_sexp(s)?)
    }
}

impl FromStr for Tactic {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        tactic_of(&parse_sexp(s)?)
    }
}

macro_rules! serde_via_string {
    ($($ty:ty),*) => {$(
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    )*};
}

serde_via_string!(Term, Goal, ProofState, Tactic);

// ---- infix ----

struct Infix<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Infix<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Term, KernelError> {
        let mut t = self.product()?;
        while self.eat(b'+') {
            t = Term::add(t, self.product()?);
        }
        Ok(t)
    }

    fn product(&mut self) -> Result<Term, KernelError> {
        let mut t = self.atom()?;
        while self.eat(b'*') {
            t = Term::mul(t, self.atom()?);
        }
        Ok(t)
    }

    fn atom(&mut self) -> Result<Term, KernelError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let t = self.sum()?;
                if !self.eat(b')') {
                    return Err(err("expected ')'"));
                }
                Ok(t)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let n: u64 = std::str::from_utf8(&self.src[start..self.pos])
                    .expect("ascii")
                    .parse()
                    .map_err(|_| err("numeral too large"))?;
                Ok(Term::numeral(n))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                if word == "S" || word == "succ" {
                    if !self.eat(b'(') {
                        return Err(err("expected '(' after successor"));
                    }
                    let t = self.sum()?;
                    if !self.eat(b')') {
                        return Err(err("expected ')'"));
                    }
                    Ok(Term::succ(t))
                } else if is_ident(word) {
                    Ok(Term::var(word))
                } else {
                    Err(err(format!("bad identifier `{word}`")))
                }
            }
            _ => Err(err("expected a term")),
        }
    }
}

/// Parses an infix term such as `a + b * 2`.
pub fn parse_infix(src: &str) -> Result<Term, KernelError> {
    let mut p = Infix {
        src: src.as_bytes(),
        pos: 0,
    };
    let t = p.sum()?;
    if p.peek().is_some() {
        return Err(err(format!("trailing input in `{src}`")));
    }
    Ok(t)
}

/// Parses `lhs = rhs` in infix syntax into a hypothesis-free goal.
pub fn parse_equation(src: &str) -> Result<Goal, KernelError> {
    let (l, r) = src
        .split_once('=')
        .ok_or_else(|| err(format!("missing '=' in `{src}`")))?;
    Ok(Goal::new(parse_infix(l)?, parse_infix(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infix_is_left_associative() {
        let t = parse_infix("a + b + c").unwrap();
        assert_eq!(t.to_string(), "(+ (+ a b) c)");
        let t = parse_infix("a + b * S(c) + 2").unwrap();
        assert_eq!(t.to_string(), "(+ (+ a (* b (S c))) (S (S 0)))");
    }

    #[test]
    fn prefix_round_trip_on_state() {
        let goal = parse_equation("0 + a = a").unwrap().with_hyps(vec![Hypothesis {
            name: "h0".into(),
            lhs: Term::var("a"),
            rhs: Term::numeral(1),
        }]);
        let st = ProofState {
            goals: vec![goal.clone(), parse_equation("b * 1 = b").unwrap()],
            steps: 4,
        };
        let text = st.to_string();
        assert_eq!(
            text,
            "(state 4 (goal (hyps (h0 a (S 0))) (+ 0 a) a) (goal (hyps) (* b (S 0)) b))"
        );
        assert_eq!(text.parse::<ProofState>().unwrap(), st);
    }

    #[test]
    fn tactic_parse() {
        for src in ["(refl)", "(rw_assoc_add r.1.0)", "(apply_hyp h2 l)", "(simp_arith l.0)"] {
            assert_eq!(src.parse::<Tactic>().unwrap().to_string(), src);
        }
        assert!("(rw_bogus l)".parse::<Tactic>().is_err());
        assert!("(rw_comm_add x.0)".parse::<Tactic>().is_err());
        assert!("(rw_comm_add l.2)".parse::<Tactic>().is_err());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!("(+ a)".parse::<Term>().is_err());
        assert!("(S a b)".parse::<Term>().is_err());
        assert!("(+ a b".parse::<Term>().is_err());
        assert!("A".parse::<Term>().is_err());
        assert!("(state x)".parse::<ProofState>().is_err());
        assert!(parse_equation("a + b").is_err());
    }
}
