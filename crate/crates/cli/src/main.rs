use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use curriprove::pipeline::{
    merge, IterationStatus, LedgerRecord, MetricsRow, PipelineError, Run, RunConfig, RunLedger,
};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Curriculum preference optimization for a tactic policy over a toy
/// equational prover.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Held-out pass@1 early stop (overrides the config).
    #[arg(long, global = true)]
    early_stop: bool,
    /// Any config key as a dotted path, e.g. `--set scoring.k=16` or
    /// `--set pairing.threshold=0.4`. Values are TOML; bare words are
    /// strings. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the theorem corpus and the held-out split.
    GenCorpus,
    /// Bucket the training corpus by difficulty.
    Curriculum,
    /// Fit P_0 on the whole curriculum.
    Sft,
    /// Score bucket n with P_{n-1} and fit G_n.
    Score {
        #[arg(long = "iter")]
        n: u32,
    },
    /// Build preference pairs from the scores of iteration n.
    Pair {
        #[arg(long = "iter")]
        n: u32,
    },
    /// Train P_n from P_{n-1} on the pairs of iteration n.
    Dpo {
        #[arg(long = "iter")]
        n: u32,
    },
    /// The full loop: stage 1 if needed, every iteration, then the report.
    Iterate,
    /// Evaluate checkpoints on the held-out split (all present by default).
    Eval {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<u32>,
    },
    /// Write metrics.tsv and curve.tsv from the attempt logs.
    Report,
}

fn parse_set(s: &str) -> Result<toml::Table, PipelineError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("--set {s}: expected KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|p| !p.is_empty()).ok_or_else(|| {
        PipelineError::Config(format!("--set {s}: empty key"))
    })?;
    let mut table = toml::Table::new();
    table.insert(last.to_string(), value);
    for p in parts.into_iter().rev() {
        let mut outer = toml::Table::new();
        outer.insert(p.to_string(), toml::Value::Table(table));
        table = outer;
    }
    Ok(table)
}

impl Cli {
    /// The config requested on the command line, or `None` to use the one
    /// stored in the run directory.
    fn requested_config(&self) -> Result<Option<RunConfig>, PipelineError> {
        let overrides = self.seed.is_some() || self.threads.is_some() || self.early_stop || !self.sets.is_empty();
        if self.config.is_none() && !overrides {
            return Ok(None);
        }
        let mut table = match &self.config {
            Some(path) => {
                let src = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                toml::from_str(&src).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let stored = self.out.join("config.toml");
        if self.config.is_none() && stored.exists() {
            // flags alone refine the stored config
            let src = std::fs::read_to_string(&stored).map_err(|e| PipelineError::io(&stored, e))?;
            table = toml::from_str(&src).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if let Some(seed) = self.seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(threads) = self.threads {
            table.insert("threads".into(), toml::Value::Integer(threads as i64));
        }
        if self.early_stop {
            merge(&mut table, parse_set("iterate.early_stop=true")?);
        }
        for s in &self.sets {
            merge(&mut table, parse_set(s)?);
        }
        RunConfig::from_table(table).map(Some)
    }
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        let pass: Vec<String> = r.pass.iter().map(|(k, v)| format!("pass@{k}={v:.4}")).collect();
        println!("policy_{}\t{} theorems\t{}", r.checkpoint, r.theorems, pass.join("\t"));
    }
}

fn print_ledger(ledger: &RunLedger) {
    for rec in &ledger.records {
        match rec {
            LedgerRecord::Stage1(s) => {
                println!(
                    "stage1\t{} train / {} held-out theorems\tsft loss {:.4} -> {:.4}",
                    s.train_theorems, s.heldout_theorems, s.sft_loss_initial, s.sft_loss_final
                );
                if !s.small_buckets.is_empty() {
                    println!("small buckets: {:?}", s.small_buckets);
                }
            }
            LedgerRecord::Iteration(it) => {
                let status = match it.status {
                    IterationStatus::Trained => "trained",
                    IterationStatus::NoPairs => "no pairs, carried forward",
                    IterationStatus::EmptyBucket => "empty bucket, carried forward",
                };
                println!(
                    "iteration {}\t{} states scored\t{} pairs\t{status}",
                    it.n, it.scored_states, it.pairs
                );
            }
            LedgerRecord::EarlyStop { after, pass_at_1, previous } => println!(
                "early stop after iteration {after}: pass@1 {pass_at_1:.4} <= {previous:.4}"
            ),
        }
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let run = Run::attach(&cli.out, cli.requested_config()?)?;
    match &cli.command {
        Command::GenCorpus => {
            let (train, heldout) = run.gen_corpus()?;
            println!("{} training and {} held-out theorems", train.len(), heldout.len());
        }
        Command::Curriculum => {
            let data = run.curriculum()?;
            for (n, b) in &data.buckets {
                println!("bucket {n}\t{} triplets", b.len());
            }
        }
        Command::Sft => {
            let (_, losses) = run.sft()?;
            println!(
                "sft loss {:.4} -> {:.4}",
                losses[0],
                losses.last().expect("loss history is non-empty")
            );
        }
        Command::Score { n } => {
            check_iteration(*n)?;
            let (_, searched, all) = run.score(*n)?;
            println!("bucket {n}: {searched} states scored by search, {all} in total");
        }
        Command::Pair { n } => {
            check_iteration(*n)?;
            println!("{} pairs", run.pair(*n)?.len());
        }
        Command::Dpo { n } => {
            check_iteration(*n)?;
            let (_, stats) = run.dpo(*n)?;
            match (stats.first(), stats.last()) {
                (Some(a), Some(b)) => println!(
                    "{} steps, loss {:.4} -> {:.4}, margin {:.4} -> {:.4}",
                    stats.len(),
                    a.loss,
                    b.loss,
                    a.margin,
                    b.margin
                ),
                _ => println!("no pairs; policy_{} carried forward", n - 1),
            }
        }
        Command::Iterate => {
            let ledger = RunLedger::load(&run.store)?;
            if ledger.iterations().next().is_some() {
                return Err(PipelineError::Config(format!(
                    "{} already holds iterations",
                    cli.out.display()
                )));
            }
            let has_stage1 = ledger.records.iter().any(|r| matches!(r, LedgerRecord::Stage1(_)));
            if !has_stage1 {
                run.stage1_prepare()?;
            }
            let (_, ledger) = run.stage3_iterate()?;
            print_ledger(&ledger);
            print_rows(&run.evaluate_and_report(&run.checkpoints())?);
        }
        Command::Eval { checkpoints } => {
            let list = if checkpoints.is_empty() {
                run.checkpoints()
            } else {
                checkpoints.clone()
            };
            for n in list {
                let (_, metrics) = run.evaluate(n)?;
                let line: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!("policy_{n}\t{}", line.join("\t"));
            }
        }
        Command::Report => print_rows(&run.evaluate_and_report(&run.checkpoints())?),
    }
    Ok(())
}

fn check_iteration(n: u32) -> Result<(), PipelineError> {
    if n == 0 {
        return Err(PipelineError::Config("iterations are numbered from 1".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
