//! Command-line harness: dataset generation, experiment runs, noise sweeps
//! and cross-run reports.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for numeric or
//! certification failures. The default output root comes from
//! `BILEVEL_DFO_OUT` (falling back to `./runs`).

use anyhow::{anyhow, Context};
use bilevel_dfo::bilevel::SolverKind;
use bilevel_dfo::datagen::{gen_dataset, DataKind, SignalSpec};
use bilevel_dfo::driver::Termination;
use bilevel_dfo::experiments::{
    compare_variants, run_experiment, standard_variants, sweep_sigma, AccuracySpec,
    ExperimentConfig, ExperimentKind,
};
use bilevel_dfo::report;
use bilevel_dfo::solvers::GdStep;
use bilevel_dfo::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bilevel-dfo",
    about = "Dynamic-accuracy derivative-free trust-region solver for bilevel hyperparameter learning",
    version
)]
struct Cli {
    /// Cap the worker-thread count for per-image lower-level solves.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON sidecar).
    Gen(GenArgs),
    /// Run one experiment (or all six solver/accuracy variants).
    Run(RunArgs),
    /// Run denoise-1 across noise levels and tabulate the learned alpha.
    SweepSigma(SweepArgs),
    /// Join run directories into comparison tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Problem family the data serves.
    #[arg(long, value_enum)]
    kind: CliDataKind,
    /// Number of images.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Signal length.
    #[arg(long = "N", default_value_t = 256)]
    n_pixels: usize,
    /// Noise level.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (default: <output root>/dataset).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum CliDataKind {
    Denoise,
    Mri,
}

#[derive(Copy, Clone, ValueEnum)]
enum CliExperiment {
    Denoise1,
    Denoise3,
    Mri,
}

impl CliExperiment {
    fn kind(self) -> ExperimentKind {
        match self {
            CliExperiment::Denoise1 => ExperimentKind::Denoise1,
            CliExperiment::Denoise3 => ExperimentKind::Denoise3,
            CliExperiment::Mri => ExperimentKind::Mri,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum CliSolver {
    Gd,
    GdFast,
    Fista,
}

impl CliSolver {
    fn kind(self) -> SolverKind {
        match self {
            CliSolver::Gd => SolverKind::gd(),
            CliSolver::GdFast => SolverKind::Gd {
                step: GdStep::TwoOverSum,
            },
            CliSolver::Fista => SolverKind::Fista,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment family (required unless --config is given).
    #[arg(long, value_enum)]
    experiment: Option<CliExperiment>,
    /// Use the reduced desk-scale sizes.
    #[arg(long, default_value_t = false)]
    desk: bool,
    #[arg(long, value_enum)]
    solver: Option<CliSolver>,
    /// Accuracy variant: dynamic, low, high or fixed:<K>.
    #[arg(long)]
    accuracy: Option<String>,
    /// Upper-level evaluation budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Regularizer weight (condition penalty or l1).
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated starting point.
    #[arg(long)]
    theta0: Option<String>,
    /// Number of images.
    #[arg(long)]
    n: Option<usize>,
    /// Signal length.
    #[arg(long = "N")]
    n_pixels: Option<usize>,
    /// FISTA iterations for the final reconstructions.
    #[arg(long)]
    recon_iters: Option<usize>,
    /// Run all six {dynamic,low,high} x {gd,fista} variants.
    #[arg(long, default_value_t = false)]
    all_variants: bool,
    /// Output directory (default: <output root>/<experiment>-<variant>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated noise levels.
    #[arg(long, default_value = "0.1,0.01,0.001")]
    sigmas: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories (or one parent directory of runs).
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    /// Output directory for the comparison tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output_root() -> PathBuf {
    std::env::var_os("BILEVEL_DFO_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_accuracy(s: &str) -> anyhow::Result<AccuracySpec> {
    match s {
        "dynamic" => Ok(AccuracySpec::Dynamic),
        "low" => Ok(AccuracySpec::Low),
        "high" => Ok(AccuracySpec::High),
        other => {
            let k = other
                .strip_prefix("fixed:")
                .ok_or_else(|| anyhow!("accuracy must be dynamic, low, high or fixed:<K>"))?;
            Ok(AccuracySpec::Fixed(k.parse().context("bad fixed:<K>")?))
        }
    }
}

fn build_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match (&args.config, args.experiment) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(exp)) => {
            if args.desk {
                ExperimentConfig::desk(exp.kind())
            } else {
                ExperimentConfig::paper(exp.kind())
            }
        }
        (None, None) => return Err(anyhow!("either --config or --experiment is required")),
    };
    if let Some(solver) = args.solver {
        config.solver = solver.kind();
    }
    if let Some(acc) = &args.accuracy {
        config.accuracy = parse_accuracy(acc)?;
    }
    if let Some(budget) = args.budget {
        config.trust_region.eval_budget = budget;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(sigma) = args.sigma {
        config.sigma = sigma;
    }
    if let Some(beta) = args.beta {
        config.beta = beta;
    }
    if let Some(n) = args.n {
        config.n_images = n;
    }
    if let Some(n_pixels) = args.n_pixels {
        config.n_pixels = n_pixels;
        if config.kind == ExperimentKind::Mri && config.theta0.len() != n_pixels {
            config.theta0 = Vec::new();
        }
    }
    if let Some(recon) = args.recon_iters {
        config.recon_iters = recon;
    }
    if let Some(theta0) = &args.theta0 {
        config.theta0 = theta0
            .split(',')
            .map(|t| t.trim().parse::<f64>().context("bad theta0 entry"))
            .collect::<anyhow::Result<Vec<_>>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    let spec = SignalSpec {
        n_pixels: args.n_pixels,
        sigma: args.sigma,
        n_images: args.n,
        seed: args.seed,
    };
    let kind = match args.kind {
        CliDataKind::Denoise => DataKind::Denoise,
        CliDataKind::Mri => DataKind::Mri,
    };
    let dataset = gen_dataset::<f64>(&spec, kind)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| output_root().join("dataset"));
    report::write_dataset(&out, &dataset)?;
    println!("wrote dataset ({} images) to {}", args.n, out.display());
    Ok(())
}

fn run_one(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let result = run_experiment(config)?;
    report::write_run(out, &result)?;
    println!(
        "{}: theta -> alpha={:.6e} f={:.6e} ({:?}, {} evals, {} lower iters) -> {}",
        config.variant_label(),
        result.alpha(),
        result.f_tilde,
        result.termination,
        result.evals_used,
        result.lower_iters,
        out.display()
    );
    if let Termination::Failed(msg) = &result.termination {
        return Err(Error::certification(msg.clone()).into());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let config = build_config(args)?;
    if args.all_variants {
        let root = args
            .out
            .clone()
            .unwrap_or_else(|| output_root().join(config.kind.as_str()));
        let results = compare_variants(&config, &standard_variants())?;
        for (label, result) in &results {
            let dir = root.join(label);
            report::write_run(&dir, result)?;
            println!(
                "{label}: alpha={:.6e} f={:.6e} ({} lower iters)",
                result.alpha(),
                result.f_tilde,
                result.lower_iters
            );
        }
        let dirs: Vec<PathBuf> = results.iter().map(|(l, _)| root.join(l)).collect();
        let dir_refs: Vec<&Path> = dirs.iter().map(|p| p.as_path()).collect();
        let runs = report::load_runs(&dir_refs)?;
        report::write_report(&root.join("report"), &runs)?;
        println!("comparison tables in {}", root.join("report").display());
        return Ok(());
    }
    let out = args.out.clone().unwrap_or_else(|| {
        output_root().join(format!("{}-{}", config.kind.as_str(), config.variant_label()))
    });
    run_one(&config, &out)
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let config = build_config(&args.run)?;
    let sigmas = args
        .sigmas
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("bad sigma"))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = sweep_sigma(&config, &sigmas)?;
    let out = args
        .run
        .out
        .clone()
        .unwrap_or_else(|| output_root().join("sweep-sigma"));
    std::fs::create_dir_all(&out)?;
    let path = out.join("sigma_alpha.csv");
    let mut text = String::from("sigma,alpha,f_tilde,sigma_sq_over_alpha\n");
    for (sigma, alpha, f) in &rows {
        text.push_str(&format!("{sigma},{alpha},{f},{}\n", sigma * sigma / alpha));
        println!("sigma={sigma:>8}: alpha={alpha:.6e} f={f:.6e}");
    }
    std::fs::write(&path, text)?;
    println!("table in {}", path.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    // accept either run directories or one parent holding them
    let mut dirs: Vec<PathBuf> = Vec::new();
    for base in &args.runs {
        if base.join("meta.json").exists() {
            dirs.push(base.clone());
        } else if base.is_dir() {
            for entry in std::fs::read_dir(base)? {
                let path = entry?.path();
                if path.join("meta.json").exists() {
                    dirs.push(path);
                }
            }
        }
    }
    dirs.sort();
    let dir_refs: Vec<&Path> = dirs.iter().map(|p| p.as_path()).collect();
    let runs = report::load_runs(&dir_refs)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| output_root().join("report"));
    report::write_report(&out, &runs)?;
    println!("report over {} runs in {}", runs.len(), out.display());
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numeric(_)) | Some(Error::Certification(_)) => 3,
        Some(_) => 2,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::SweepSigma(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
