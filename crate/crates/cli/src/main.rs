use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedsn_core::dataio::read_libsvm;
use fedsn_core::harness::{emit, run_algorithm, tune_and_run, Algorithm, ExperimentConfig, PointParams, RunContext};
use fedsn_core::{GlmProblem, LabelMode, Objective, OracleCase, ParseOptions, RunSpec, SamplingMode};
use serde_json::json;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "fedsn", version, about = "Distributed stochastic Newton simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm once and print the per-round loss.
    Run(RunArgs),
    /// Tune and rerun every setting of an experiment config.
    Tune(TuneArgs),
    /// Solve the regularized problem to high precision with exact Newton.
    NewtonRef(NewtonArgs),
    /// Parse a LIBSVM file and print a summary.
    ParseCheck(ParseArgs),
    /// Print the JSON schema of experiment configs.
    PrintSchema,
}

#[derive(Args)]
struct DataArgs {
    /// Map labels {0,1} to {-1,+1}.
    #[arg(long)]
    zero_one: bool,
    /// Append a constant-1 feature.
    #[arg(long)]
    add_bias: bool,
}

impl DataArgs {
    fn options(&self) -> ParseOptions {
        ParseOptions {
            label_mode: if self.zero_one { LabelMode::ZeroOne } else { LabelMode::Strict },
            add_bias: self.add_bias,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Fedsn,
    FedsnLite,
    Fedac1,
    Fedac2,
    LocalSgd,
    MinibatchSgd,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Fedsn => Algorithm::Fedsn,
            AlgArg::FedsnLite => Algorithm::FedsnLite,
            AlgArg::Fedac1 => Algorithm::Fedac1,
            AlgArg::Fedac2 => Algorithm::Fedac2,
            AlgArg::LocalSgd => Algorithm::LocalSgd,
            AlgArg::MinibatchSgd => Algorithm::MinibatchSgd,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    alg: AlgArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(short = 'M', long = "machines", default_value_t = 1)]
    machines: usize,
    #[arg(short = 'K', long = "steps", default_value_t = 1)]
    steps: usize,
    #[arg(short = 'R', long = "rounds", default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.25)]
    nu: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_internal: f64,
    /// Sample without replacement (one pass over the data).
    #[arg(long)]
    single_pass: bool,
    /// Distance bound B used by fedsn.
    #[arg(long, default_value_t = 10.0)]
    distance: f64,
    /// Gradient draws used to estimate σ for fedsn.
    #[arg(long, default_value_t = 1000)]
    probe_budget: usize,
    /// Write the run record as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data_args: DataArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, required_unless_present = "print_schema")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    print_schema: bool,
}

#[derive(Args)]
struct NewtonArgs {
    data: PathBuf,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data_args: DataArgs,
}

#[derive(Args)]
struct ParseArgs {
    path: PathBuf,
    #[command(flatten)]
    data_args: DataArgs,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Tune(a) => tune(a),
        Command::NewtonRef(a) => newton_ref(a),
        Command::ParseCheck(a) => parse_check(a),
        Command::PrintSchema => print_schema(),
    }
}

fn load(path: &Path, args: &DataArgs) -> Result<Arc<fedsn_core::Dataset>> {
    let ds = read_libsvm(path, &args.options()).with_context(|| format!("reading {}", path.display()))?;
    Ok(Arc::new(ds))
}

fn run(a: RunArgs) -> Result<()> {
    let alg = Algorithm::from(a.alg);
    let problem = GlmProblem::new(load(&a.data, &a.data_args)?, a.mu)?;
    if alg.tunes_eta() && a.eta.is_none() {
        bail!("--eta is required for {alg}");
    }
    let point = PointParams {
        eta: a.eta,
        beta: Some(a.beta),
        lambda_internal: Some(a.lambda_internal),
    };
    let ctx = RunContext {
        nu: a.nu,
        constants: (alg == Algorithm::Fedsn).then(|| problem.estimate_constants(a.probe_budget, a.distance, a.seed)),
        case: OracleCase::DifferentSamples,
    };
    let spec = RunSpec::new(a.machines, a.steps, a.rounds, a.seed).with_sampling(if a.single_pass {
        SamplingMode::SinglePass
    } else {
        SamplingMode::WithReplacement
    });
    let loss = |x: &[f64]| problem.value(x);
    let record = run_algorithm(alg, &problem, &point, &ctx, &spec, &loss)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "round,loss")?;
    for (r, v) in record.trajectory.iter().enumerate() {
        writeln!(out, "{r},{v}")?;
    }
    if let Some(msg) = &record.diverged {
        eprintln!("diverged: {msg}");
    }
    eprintln!("oracle calls: {}", record.ledger.calls());
    if let Some(out) = a.out {
        std::fs::write(&out, serde_json::to_string_pretty(&record)?).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    if a.print_schema {
        return print_schema();
    }
    let path = a.config.expect("clap enforces --config");
    let cfg = ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let started = Instant::now();
    let table = tune_and_run(&cfg, a.threads)?;
    let meta = emit(&table, &cfg, &a.out, a.threads, started.elapsed().as_secs_f64())?;
    println!(
        "{} rows, {} runs written to {} in {:.1}s",
        meta.rows,
        meta.runs,
        a.out.display(),
        meta.wall_seconds
    );
    Ok(())
}

fn newton_ref(a: NewtonArgs) -> Result<()> {
    let problem = GlmProblem::new(load(&a.data, &a.data_args)?, a.mu)?;
    let sol = problem.newton_reference(None, a.tol, a.max_iters)?;
    println!("F* = {:.15e}", sol.value);
    println!("|grad| = {:e} after {} iterations", sol.grad_norm, sol.iterations);
    if let Some(out) = a.out {
        let doc = json!({
            "mu": a.mu,
            "fstar": sol.value,
            "grad_norm": sol.grad_norm,
            "iterations": sol.iterations,
            "x": sol.x,
        });
        std::fs::write(&out, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn parse_check(a: ParseArgs) -> Result<()> {
    let ds = load(&a.path, &a.data_args)?;
    let s = ds.summary();
    println!("count: {}", s.count);
    println!("dim: {}", s.dim);
    println!(
        "labels: +1 = {}, -1 = {} ({:.4} positive)",
        s.positives,
        s.negatives,
        s.positives as f64 / s.count as f64
    );
    println!("nnz: {}", s.nnz);
    println!("max |a_i|: {}", s.max_row_norm);
    Ok(())
}

fn print_schema() -> Result<()> {
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&ExperimentConfig::schema())?)?;
    Ok(())
}
