mod common;

use common::{small_config, tree_digests};
use curriprove::corpus::Triplet;
use curriprove::kernel::{Position, ProofState, Side, Tactic};
use curriprove::pairing::PreferencePair;
use curriprove::pipeline::{
    paths, IterationStatus, LedgerRecord, PipelineError, Run, RunLedger,
};
use curriprove::policy::TacticPolicy;
use curriprove::search::{pass_at_k_from_log, AttemptRecord};

fn run_in(dir: &std::path::Path, cfg: curriprove::pipeline::RunConfig) -> Run {
    Run::create(dir, cfg).unwrap()
}

#[test]
fn stage1_writes_buckets_checkpoint_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), small_config(1));
    let (data, p0) = run.stage1_prepare().unwrap();
    assert_eq!(data.levels().collect::<Vec<_>>(), (1..=4).collect::<Vec<_>>());
    assert_eq!(run.levels(), vec![1, 2, 3, 4]);
    assert_eq!(run.load_policy(0).unwrap(), p0);

    let ledger = RunLedger::load(&run.store).unwrap();
    let [LedgerRecord::Stage1(s)] = ledger.records.as_slice() else {
        panic!("expected one stage-1 record");
    };
    assert_eq!(s.train_theorems + s.heldout_theorems, 60);
    assert_eq!(s.heldout_theorems, 12);
    assert!(s.sft_loss_final < s.sft_loss_initial);
    assert!(s.files.contains_key(&paths::policy(0)));
    assert!(s.files.contains_key(&paths::curriculum(4)));
    assert_eq!(s.wall_clock, None);
    ledger.verify(&run.store).unwrap();
}

#[test]
fn full_run_is_reproducible_and_thread_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_in(a.path(), small_config(2)).run_all().unwrap();
    run_in(b.path(), small_config(2)).run_all().unwrap();
    let mut threaded = small_config(2);
    threaded.threads = 3;
    run_in(c.path(), threaded).run_all().unwrap();

    let (da, db, mut dc) = (tree_digests(a.path()), tree_digests(b.path()), tree_digests(c.path()));
    assert!(da.len() > 20);
    assert_eq!(da, db);
    // only the recorded thread count differs
    let mut da = da;
    da.remove(paths::CONFIG);
    dc.remove(paths::CONFIG);
    assert_eq!(da, dc);
}

#[test]
fn ledger_records_each_iteration_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), small_config(3));
    run.stage1_prepare().unwrap();
    let (last, ledger) = run.stage3_iterate().unwrap();
    assert_eq!(last, run.load_policy(3).unwrap());

    let its: Vec<_> = ledger.iterations().collect();
    assert_eq!(its.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1, 2, 3]);
    for r in &its {
        assert!(r.files.contains_key(&paths::policy(r.n)));
        assert!(r.files.contains_key(&paths::attempts(r.n)));
        assert!(r.metrics.contains_key("heldout/pass@1"));
        if r.status == IterationStatus::Trained {
            assert!(r.pairs > 0 && r.dpo_steps > 0);
        }
    }
    assert_eq!(RunLedger::load(&run.store).unwrap(), ledger);
    ledger.verify(&run.store).unwrap();
    for n in run.checkpoints() {
        run.evaluate(n).unwrap();
    }

    std::fs::write(run.store.path(&paths::pairs(2)), b"tampered\n").unwrap();
    assert!(matches!(
        ledger.verify(&run.store),
        Err(PipelineError::DigestMismatch(p)) if p == paths::pairs(2)
    ));
}

#[test]
fn iteration_reads_only_its_own_bucket() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), small_config(4));
    run.stage1_prepare().unwrap();
    for n in 1..=3 {
        run.store.clear_reads();
        run.iteration(n).unwrap();
        let buckets: Vec<String> = run
            .store
            .reads()
            .into_iter()
            .filter(|r| r.starts_with("curriculum/"))
            .collect();
        assert_eq!(buckets, vec![paths::curriculum(n)]);
        assert!(!run.store.reads().contains(&paths::CORPUS.to_string()));
    }
}

#[test]
fn zero_iterations_return_p0() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(5);
    cfg.iterate.iterations = 0;
    let run = run_in(dir.path(), cfg);
    let (_, p0) = run.stage1_prepare().unwrap();
    let (p, ledger) = run.stage3_iterate().unwrap();
    assert_eq!(p, p0);
    assert_eq!(ledger.iterations().count(), 0);
}

#[test]
fn full_threshold_yields_no_pairs_and_carries_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(6);
    cfg.pairing.threshold = 1.0;
    let run = run_in(dir.path(), cfg);
    let (_, p0) = run.stage1_prepare().unwrap();
    let (p, ledger) = run.stage3_iterate().unwrap();
    for r in ledger.iterations() {
        assert_eq!(r.status, IterationStatus::NoPairs);
        let pairs: Vec<PreferencePair> = run.store.read_jsonl(&paths::pairs(r.n)).unwrap();
        assert!(pairs.is_empty());
    }
    assert_eq!(p.weights, p0.weights);
}

#[test]
fn early_stop_after_flat_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(7);
    cfg.pairing.threshold = 1.0;
    cfg.iterate.early_stop = true;
    let run = run_in(dir.path(), cfg);
    run.stage1_prepare().unwrap();
    let (_, ledger) = run.stage3_iterate().unwrap();
    assert_eq!(ledger.iterations().count(), 1);
    assert!(matches!(ledger.records.last(), Some(LedgerRecord::EarlyStop { after: 1, .. })));
}

#[test]
fn missing_buckets_carry_policy_forward() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(8);
    cfg.corpus.size = 1;
    cfg.corpus.heldout_fraction = 0.0;
    cfg.iterate.iterations = 4;
    let run = run_in(dir.path(), cfg);
    let (data, _) = run.stage1_prepare().unwrap();
    // one theorem gives one proof path: one triplet per level
    assert!(data.buckets.values().all(|b| b.len() == 1));
    let ledger = RunLedger::load(&run.store).unwrap();
    let Some(LedgerRecord::Stage1(s)) = ledger.records.first() else {
        panic!("expected a stage-1 record");
    };
    assert_eq!(s.small_buckets, data.levels().collect::<Vec<_>>());
    let (_, ledger) = run.stage3_iterate().unwrap();
    for r in ledger.iterations() {
        if !data.buckets.contains_key(&r.n) {
            assert_eq!(r.status, IterationStatus::EmptyBucket);
        }
    }
    assert_eq!(ledger.iterations().count(), 4);
}

#[test]
fn constructed_bucket_prefers_the_winning_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(9);
    cfg.scoring.k = 32;
    cfg.scoring.n_attempt = 10;
    let run = run_in(dir.path(), cfg);
    let state: ProofState = "(state 0 (goal (hyps (h0 c a) (h1 c b)) c a))".parse().unwrap();
    let at = Position::new(Side::Lhs, vec![]);
    let win = Tactic::ApplyHyp { name: "h0".into(), at: at.clone() };
    let lose = Tactic::ApplyHyp { name: "h1".into(), at };
    let bucket = vec![Triplet {
        theorem: 0,
        state,
        tactic: win.clone(),
        difficulty: 1,
    }];
    run.store.write_jsonl(&paths::curriculum(1), &bucket).unwrap();
    run.save_policy(0, &TacticPolicy::zeros("policy_0", 256, 1.0)).unwrap();

    let (g, pairs) = run.stage2_generate(1).unwrap();
    assert!(g.fitted);
    assert!(pairs.iter().any(|p| p.chosen == win && p.rejected == lose));
    assert!(pairs.iter().all(|p| p.rejected != win));
}

#[test]
fn report_matches_attempt_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(10);
    cfg.eval.ks = vec![1, 2];
    let run = run_in(dir.path(), cfg);
    let rows = run.run_all().unwrap();
    assert_eq!(rows.iter().map(|r| r.checkpoint).collect::<Vec<_>>(), vec![0, 1, 2, 3]);

    let heldout: Vec<curriprove::corpus::ProofTree> = run.store.read_jsonl(paths::HELDOUT).unwrap();
    let ids: Vec<u64> = heldout.iter().map(|t| t.id).collect();
    for r in &rows {
        let log: Vec<AttemptRecord> = run.store.read_jsonl(&paths::attempts(r.checkpoint)).unwrap();
        assert_eq!(r.pass_at(1), Some(pass_at_k_from_log(&log, &ids, 1)));
        assert_eq!(r.pass_at(2), Some(pass_at_k_from_log(&log, &ids, 2)));
        assert!(r.pass_at(1) <= r.pass_at(2));
    }

    let metrics = std::fs::read_to_string(run.store.path(paths::METRICS)).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "checkpoint\tsplit\ttheorems\tpass@1\tpass@2");
    assert_eq!(lines.len(), 5);
    let curve = std::fs::read_to_string(run.store.path(paths::CURVE)).unwrap();
    let iters: Vec<&str> = curve.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(iters, vec!["1", "2", "3"]);

    let single = run.evaluate_and_report(&[2]).unwrap();
    assert_eq!(single.len(), 1);
    assert!(matches!(
        run.evaluate_and_report(&[9]),
        Err(PipelineError::MissingCheckpoint(_))
    ));
}

#[test]
fn run_directories_are_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), small_config(11));
    run.stage1_prepare().unwrap();
    assert!(matches!(
        Run::create(dir.path(), small_config(11)),
        Err(PipelineError::Config(_))
    ));
    assert!(matches!(
        Run::attach(dir.path(), Some(small_config(12))),
        Err(PipelineError::Config(_))
    ));
    assert_eq!(Run::open(dir.path()).unwrap().config, small_config(11));
    assert!(matches!(
        run.stage2_generate(1).and_then(|_| run.load_policy(7)),
        Err(PipelineError::MissingCheckpoint(_))
    ));
}
