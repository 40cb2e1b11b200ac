//! Command-line surface for multi-agent Hawkes processes: simulation,
//! fitting, superposition, the risk-bound check, recommendation, evaluation,
//! and experiment sweeps.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, configs, or
//! data), 2 on runtime failures (I/O).

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use multihawkes::io::{
    fnv1a_hex, read_checkpoint, read_events, read_recommendations, write_checkpoint, write_events,
    write_fit_csv, write_plan, write_rec_metrics, write_recommendations, write_sweep_csv,
    Provenance,
};
use multihawkes::pipeline::{run_sweep, Granularity, PipelineConfig, Strategy, SweepConfig};
use multihawkes::recsys::evaluate_topn;
use multihawkes::superpose::{check_tightening, diversity_plan, RiskBoundInputs};
use multihawkes::{
    recommend, run_strategy, simulate_dataset, Dataset, Error, KernelBasis, ModelParams,
    OptConfig, SimConfig,
};

#[derive(Parser)]
#[command(name = "multihawkes", version, about = "Multi-agent Hawkes processes: simulate, fit, superpose, recommend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with the branching-process simulator.
    Simulate(SimulateArgs),
    /// Fit a model with one of the four strategies.
    Fit(FitArgs),
    /// Build a diversity-driven superposition of an event file.
    Superpose(SuperposeArgs),
    /// Evaluate the risk-bound tightening condition.
    CheckBound(CheckBoundArgs),
    /// Rank items per user from a fitted checkpoint.
    Recommend(RecommendArgs),
    /// Score ranked lists against held-out events.
    Evaluate(EvaluateArgs),
    /// Run a strategies x seeds experiment grid from a JSON spec.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with a simulation config; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event output path (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the ground-truth parameters as a checkpoint.
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Stamp the checkpoint provenance with the wall-clock time.
    #[arg(long)]
    stamp: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Event data (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// batch | stoc | augment | superpose
    #[arg(long)]
    method: String,
    /// Maximum folder size K for superpose/augment.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Folder count M' (alternative to --K).
    #[arg(long)]
    folders: Option<usize>,
    /// Batch size B.
    #[arg(long = "B", default_value_t = 64)]
    batch: usize,
    /// History cap J.
    #[arg(long = "J", default_value_t = 50)]
    history: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Decay the learning rate as eta / sqrt(epoch).
    #[arg(long)]
    eta_decay: bool,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Outer rounds for the superpose method.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    /// Optimizer epochs per stage of each superpose round.
    #[arg(long, default_value_t = 1)]
    stage_epochs: usize,
    /// Early-stop tolerance on the relative parameter change per epoch.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth checkpoint for error traces.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Exponential kernel rates, comma separated (ignored when --truth
    /// provides a basis).
    #[arg(long, default_value = "1.0")]
    rates: String,
    /// Fitted checkpoint output.
    #[arg(long)]
    out: PathBuf,
    /// Fit trace CSV output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write real wall-clock seconds into the report (off keeps re-runs
    /// byte-identical).
    #[arg(long)]
    timing: bool,
    /// Stamp the checkpoint provenance with the wall-clock time.
    #[arg(long)]
    stamp: bool,
}

#[derive(Args)]
struct SuperposeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Folder count M'.
    #[arg(long)]
    folders: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Merged events output (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Plan output (JSON folder lists).
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckBoundArgs {
    #[arg(long)]
    u0: f64,
    #[arg(long)]
    a0: f64,
    #[arg(long)]
    u0p: f64,
    #[arg(long = "M")]
    m: usize,
    #[arg(long = "Mp")]
    m_prime: usize,
    #[arg(long = "C")]
    c: usize,
    #[arg(long = "L", default_value_t = 1)]
    l: usize,
    #[arg(long)]
    events: u64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

#[derive(Args)]
struct RecommendArgs {
    /// Fitted model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Event histories (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// List length N.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Query time; defaults to the data horizon.
    #[arg(long)]
    at: Option<f64>,
    /// Ranked lists output (CSV user,rank,entity).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ranked lists CSV from `recommend`.
    #[arg(long)]
    results: PathBuf,
    /// Held-out events (JSONL); each agent's distinct entities form its
    /// truth set.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Per-user metrics CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep spec; see the README for the schema.
    #[arg(long)]
    spec: PathBuf,
    /// Write real wall-clock seconds into the CSV.
    #[arg(long)]
    timing: bool,
}

/// JSON schema of `sweep --spec`.
#[derive(Deserialize)]
struct SweepFile {
    /// Event data path; omit when `simulate` is given.
    #[serde(default)]
    data: Option<PathBuf>,
    /// Inline simulation config used to generate the data (and truth).
    #[serde(default)]
    simulate: Option<SimConfig>,
    /// Ground-truth checkpoint path (optional with `data`).
    #[serde(default)]
    truth: Option<PathBuf>,
    /// Exponential kernel rates for fitting when no truth basis is available.
    #[serde(default)]
    rates: Option<Vec<f64>>,
    out: PathBuf,
    #[serde(flatten)]
    sweep: SweepConfig,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate_cmd(args),
        Command::Fit(args) => fit_cmd(args),
        Command::Superpose(args) => superpose_cmd(args),
        Command::CheckBound(args) => check_bound_cmd(args),
        Command::Recommend(args) => recommend_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
    }
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), Error> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (truth, data) = simulate_dataset(&cfg)?;
    write_events(&args.out, &data)?;
    if let Some(params_out) = &args.params_out {
        let prov = Provenance {
            seed: Some(cfg.seed),
            config_hash: Some(fnv1a_hex(
                serde_json::to_string(&cfg)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .as_bytes(),
            )),
            timestamp: args.stamp.then(now_secs),
        };
        write_checkpoint(params_out, &truth, &prov)?;
    }
    println!(
        "simulated {} sequences, {} events, horizon {}",
        data.sequences.len(),
        data.total_events(),
        data.horizon
    );
    Ok(())
}

fn parse_rates(raw: &str) -> Result<KernelBasis, Error> {
    let rates = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| Error::Config(format!("bad --rates: {e}")))?;
    KernelBasis::exponential(rates)
}

fn parse_strategy(name: &str) -> Result<Strategy, Error> {
    match name {
        "batch" => Ok(Strategy::BatchOpt),
        "stoc" => Ok(Strategy::StocOpt),
        "augment" => Ok(Strategy::StocOptAugment),
        "superpose" => Ok(Strategy::StocOptSuperpose),
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected batch|stoc|augment|superpose)"
        ))),
    }
}

fn granularity_from(k: Option<usize>, folders: Option<usize>) -> Result<Option<Granularity>, Error> {
    match (k, folders) {
        (Some(_), Some(_)) => Err(Error::Config("--K and --folders are mutually exclusive".into())),
        (Some(k), None) => Ok(Some(Granularity::MaxSize(k))),
        (None, Some(f)) => Ok(Some(Granularity::Folders(f))),
        (None, None) => Ok(None),
    }
}

fn fit_cmd(args: FitArgs) -> Result<(), Error> {
    let data = read_events(&args.data)?;
    let strategy = parse_strategy(&args.method)?;
    let truth = match &args.truth {
        Some(path) => Some(read_checkpoint(path)?.0),
        None => None,
    };
    let basis = match &truth {
        Some(t) => t.basis().clone(),
        None => parse_rates(&args.rates)?,
    };
    let opt = OptConfig {
        batch_size: args.batch,
        history_cap: args.history,
        lambda0: args.lambda0,
        eta: args.eta,
        eta_decay: args.eta_decay,
        epochs: args.epochs,
        tol: args.tol,
        seed: args.seed,
    };
    let cfg = PipelineConfig {
        opt,
        strategy,
        basis,
        granularity: granularity_from(args.k, args.folders)?,
        outer_rounds: args.rounds,
        round_tol: 1e-3,
        stage_epochs: args.stage_epochs,
        truth,
    };
    let report = run_strategy(&data, &cfg)?;
    let prov = Provenance {
        seed: Some(args.seed),
        config_hash: Some(fnv1a_hex(
            serde_json::to_string(&cfg.opt)
                .map_err(|e| Error::Config(e.to_string()))?
                .as_bytes(),
        )),
        timestamp: args.stamp.then(now_secs),
    };
    write_checkpoint(&args.out, &report.params, &prov)?;
    if let Some(report_path) = &args.report {
        write_fit_csv(report_path, &report, args.timing)?;
    }
    let last = report.records.last();
    println!(
        "fitted {} epochs, final nll {:.6}{}",
        report.records.len(),
        last.map(|r| r.nll).unwrap_or(f64::NAN),
        last.and_then(|r| r.err_a)
            .map(|e| format!(", err_A {e:.4}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn superpose_cmd(args: SuperposeArgs) -> Result<(), Error> {
    let data = read_events(&args.data)?;
    let (plan, merged) = diversity_plan(&data, args.folders, args.seed)?;
    write_events(&args.out, &merged)?;
    if let Some(plan_out) = &args.plan_out {
        write_plan(plan_out, &plan)?;
    }
    println!(
        "superposed {} sequences into {} folders (K = {})",
        data.sequences.len(),
        plan.folder_count(),
        plan.k()
    );
    Ok(())
}

fn check_bound_cmd(args: CheckBoundArgs) -> Result<(), Error> {
    let inputs = RiskBoundInputs {
        u0: args.u0,
        a0: args.a0,
        u0_prime: args.u0p,
        m: args.m,
        m_prime: args.m_prime,
        c: args.c,
        l: args.l,
        total_events: args.events,
        delta: args.delta,
    };
    let check = check_tightening(&inputs)?;
    println!("holds={} lhs={:.12} rhs={:.12}", check.holds, check.lhs, check.rhs);
    Ok(())
}

fn recommend_cmd(args: RecommendArgs) -> Result<(), Error> {
    let (params, _) = read_checkpoint(&args.checkpoint)?;
    let data = read_events(&args.data)?;
    if data.c != params.c() {
        return Err(Error::Dimension(format!(
            "data has C={} but checkpoint has C={}",
            data.c,
            params.c()
        )));
    }
    let t = args.at.unwrap_or(data.horizon);
    let mut lists = Vec::new();
    for seq in &data.sequences {
        lists.push((seq.agent, recommend(&params, seq, t, args.top)?));
    }
    write_recommendations(&args.out, &lists)?;
    println!("ranked top-{} for {} users", args.top, lists.len());
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), Error> {
    let results = read_recommendations(&args.results)?;
    let truth_data = read_events(&args.truth)?;
    let mut truth_sets: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for seq in &truth_data.sequences {
        let set = truth_sets.entry(seq.agent).or_default();
        for e in seq.events() {
            set.insert(e.entity);
        }
    }
    let lists: Vec<Vec<usize>> = results
        .iter()
        .map(|(_, list)| list.iter().copied().take(args.top).collect())
        .collect();
    let sets: Vec<BTreeSet<usize>> = results
        .iter()
        .map(|(user, _)| truth_sets.get(user).cloned().unwrap_or_default())
        .collect();
    let metrics = evaluate_topn(&lists, &sets, args.top)?;
    println!(
        "p@{n}={:.4} r@{n}={:.4} f1@{n}={:.4} users={} skipped={}",
        metrics.precision,
        metrics.recall,
        metrics.f1,
        metrics.evaluated_users,
        metrics.skipped_users,
        n = args.top
    );
    if let Some(out) = &args.out {
        write_rec_metrics(out, &metrics, None)?;
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<(), Error> {
    let spec: SweepFile = load_json(&args.spec)?;
    let (data, truth, basis): (Dataset, Option<ModelParams>, KernelBasis) =
        match (&spec.simulate, &spec.data) {
            (Some(sim), None) => {
                let (truth, data) = simulate_dataset(sim)?;
                (data, Some(truth), sim.basis.clone())
            }
            (None, Some(path)) => {
                let data = read_events(path)?;
                let truth = match &spec.truth {
                    Some(t) => Some(read_checkpoint(t)?.0),
                    None => None,
                };
                let basis = match (&truth, &spec.rates) {
                    (Some(t), _) => t.basis().clone(),
                    (None, Some(rates)) => KernelBasis::exponential(rates.clone())?,
                    (None, None) => KernelBasis::exponential(vec![1.0])?,
                };
                (data, truth, basis)
            }
            _ => {
                return Err(Error::Config(
                    "sweep spec needs exactly one of `data` or `simulate`".into(),
                ))
            }
        };
    let rows = run_sweep(&data, &basis, truth.as_ref(), &spec.sweep)?;
    write_sweep_csv(&spec.out, &rows, args.timing)?;
    println!("wrote {} rows to {}", rows.len(), spec.out.display());
    Ok(())
}
