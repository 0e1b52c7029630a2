//! Line formats of the record files. Field names and order are part of the
//! on-disk contract.

use curriprove::corpus::{build_curriculum, ProofTree};
use curriprove::kernel::{parse_equation, Position, ProofState, Rule, Side, Tactic};
use curriprove::pairing::PreferencePair;
use curriprove::scoring::{Provenance, ScoreEntry, ScoredCandidateSet};
use curriprove::search::{AttemptRecord, Outcome};

fn tree() -> ProofTree {
    let root = ProofState::single(parse_equation("a + 0 = a").unwrap());
    let tactics = vec![
        Tactic::Rewrite {
            rule: Rule::AddZero,
            at: Position::new(Side::Lhs, vec![]),
        },
        Tactic::Refl,
    ];
    ProofTree::from_proof(7, root, tactics).unwrap()
}

fn line<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) -> String {
    let s = serde_json::to_string(v).unwrap();
    assert_eq!(&serde_json::from_str::<T>(&s).unwrap(), v);
    s
}

#[test]
fn proof_tree_and_triplet_lines() {
    let t = tree();
    assert_eq!(
        line(&t),
        r#"{"id":7,"tactics":["(rw_add_zero l)","(refl)"],"states":["(state 0 (goal (hyps) (+ a 0) a))","(state 1 (goal (hyps) a a))","(state 2)"]}"#
    );
    let data = build_curriculum(&[t]).unwrap();
    assert_eq!(
        line(&data.bucket(2)[0]),
        r#"{"theorem":7,"state":"(state 0 (goal (hyps) (+ a 0) a))","tactic":"(rw_add_zero l)","difficulty":2}"#
    );
}

#[test]
fn scored_set_and_pair_lines() {
    let t = tree();
    let state = t.states[0].clone();
    let set = ScoredCandidateSet {
        index: 3,
        theorem: 7,
        state: state.clone(),
        entries: vec![ScoreEntry {
            tactic: t.tactics[0].clone(),
            score: 0.7,
            provenance: Provenance::Search,
            n_success: 7,
            n_attempt: 10,
            multiplicity: 2,
        }],
    };
    assert_eq!(
        line(&set),
        r#"{"index":3,"theorem":7,"state":"(state 0 (goal (hyps) (+ a 0) a))","entries":[{"tactic":"(rw_add_zero l)","score":0.7,"provenance":"search","n_success":7,"n_attempt":10,"multiplicity":2}]}"#
    );
    let pair = PreferencePair {
        index: 3,
        theorem: 7,
        state,
        chosen: t.tactics[0].clone(),
        rejected: Tactic::Refl,
        score_w: 0.9,
        score_l: 0.1,
    };
    assert_eq!(
        line(&pair),
        r#"{"index":3,"theorem":7,"state":"(state 0 (goal (hyps) (+ a 0) a))","chosen":"(rw_add_zero l)","rejected":"(refl)","score_w":0.9,"score_l":0.1}"#
    );
}

#[test]
fn attempt_line() {
    let rec = AttemptRecord {
        theorem: 7,
        attempt: 0,
        seed: 42,
        outcome: Outcome::BudgetHit,
        proof: vec![],
        nodes: 8,
        elapsed: None,
    };
    assert_eq!(
        line(&rec),
        r#"{"theorem":7,"attempt":0,"seed":42,"outcome":"budget-hit","proof":[],"nodes":8,"elapsed":null}"#
    );
}
