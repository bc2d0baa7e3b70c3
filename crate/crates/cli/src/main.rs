use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctdopt::experiments::{
    max_entry_file, merge_json_into, reduce_file, run_ackley, run_compare, run_demo_convergence, run_demo_two_maxima,
    Experiment, ExperimentConfig,
};
use ctdopt::maxentry::{MaxEntrySearchConfig, SearchMethod, Termination};
use ctdopt::reduce::{NormKind, ReductionAlgorithm, ReductionConfig};
use ctdopt::Error;

#[derive(Parser)]
#[command(name = "ctdopt", version, about = "Maximal entries of canonical tensor decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Planted spike on a random background; per-iteration term maxima.
    DemoConvergence(ExperimentArgs),
    /// Two equal planted spikes: fixed-length run plus an extended run.
    DemoTwoMaxima(ExperimentArgs),
    /// Power method against squaring over seeded trials.
    Compare(ExperimentArgs),
    /// Global maximum of the Ackley function.
    Ackley(ExperimentArgs),
    /// Reduce the separation rank of a CTD file.
    Reduce(ReduceArgs),
    /// Locate the largest entries of a CTD file.
    MaxEntry(MaxEntryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Frobenius,
    Snorm,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Als,
    Id,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Squaring,
    Power,
}

#[derive(Args)]
struct ReductionArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
}

impl ReductionArgs {
    fn apply(&self, cfg: &mut ReductionConfig) {
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(n) = self.norm {
            cfg.norm = match n {
                NormArg::Frobenius => NormKind::Frobenius,
                NormArg::Snorm => NormKind::SNorm,
            };
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = match a {
                AlgorithmArg::Als => ReductionAlgorithm::Als,
                AlgorithmArg::Id => ReductionAlgorithm::Interpolative,
            };
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    reduction: ReductionArgs,
    /// fixed:N, lambda:DELTA or rank:R
    #[arg(long)]
    termination: Option<Termination>,
    /// Output directory (default out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file overriding defaults and flags; a run manifest also works.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    input: PathBuf,
    #[command(flatten)]
    reduction: ReductionArgs,
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON reduction settings overriding flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MaxEntryArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    termination: Option<Termination>,
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    reduction: ReductionArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON search settings overriding flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_config(path: &Path) -> ctdopt::Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))
}

fn experiment_config(experiment: Experiment, args: &ExperimentArgs) -> ctdopt::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults_for(experiment);
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    args.reduction.apply(&mut cfg.reduction);
    cfg.sync_search_reduction();
    if let Some(t) = args.termination {
        cfg.search.termination = t;
    }
    if let Some(path) = &args.config {
        cfg = cfg.merge_json(&read_config(path)?)?;
        if cfg.experiment != experiment {
            return Err(Error::InvalidConfig(format!("config is for {}, not {experiment}", cfg.experiment)));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(out: &Option<PathBuf>, name: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| Path::new("out").join(name))
}

fn run(cli: Cli) -> ctdopt::Result<serde_json::Value> {
    match cli.command {
        Command::DemoConvergence(args) => {
            let cfg = experiment_config(Experiment::DemoConvergence, &args)?;
            let dir = out_dir(&args.out, "demo-convergence");
            let outcome = run_demo_convergence(&cfg)?;
            let manifest = outcome.write(&cfg, &dir)?;
            Ok(json!({"experiment": "demo-convergence", "manifest": manifest, "report": outcome.report}))
        }
        Command::DemoTwoMaxima(args) => {
            let cfg = experiment_config(Experiment::DemoTwoMaxima, &args)?;
            let dir = out_dir(&args.out, "demo-two-maxima");
            let outcome = run_demo_two_maxima(&cfg)?;
            let manifest = outcome.write(&cfg, &dir)?;
            Ok(json!({"experiment": "demo-two-maxima", "manifest": manifest, "report": outcome.report}))
        }
        Command::Compare(args) => {
            let cfg = experiment_config(Experiment::Compare, &args)?;
            let dir = out_dir(&args.out, "compare");
            let outcome = run_compare(&cfg)?;
            let manifest = outcome.write(&cfg, &dir)?;
            Ok(json!({
                "experiment": "compare",
                "manifest": manifest,
                "summary": outcome.summary,
                "timing": outcome.timing,
            }))
        }
        Command::Ackley(args) => {
            let cfg = experiment_config(Experiment::Ackley, &args)?;
            let dir = out_dir(&args.out, "ackley");
            let outcome = run_ackley(&cfg)?;
            let manifest = outcome.write(&cfg, &dir)?;
            Ok(json!({"experiment": "ackley", "manifest": manifest, "report": outcome.report}))
        }
        Command::Reduce(args) => {
            let mut cfg = ReductionConfig::default();
            args.reduction.apply(&mut cfg);
            if args.max_rank.is_some() {
                cfg.max_rank = args.max_rank;
            }
            if let Some(path) = &args.config {
                cfg = merge_json_into(&cfg, &read_config(path)?)?;
            }
            cfg.validate()?;
            let dir = out_dir(&args.out, "reduce");
            let meta = reduce_file(&args.input, &cfg, &dir)?;
            Ok(json!({"command": "reduce", "out": dir, "meta": meta}))
        }
        Command::MaxEntry(args) => {
            let mut cfg = MaxEntrySearchConfig::default();
            if let Some(m) = args.method {
                cfg.method = match m {
                    MethodArg::Squaring => SearchMethod::Squaring,
                    MethodArg::Power => SearchMethod::PowerMethod,
                };
            }
            if let Some(t) = args.termination {
                cfg.termination = t;
            }
            if let Some(k) = args.k_max {
                cfg.k_max = k;
            }
            if let Some(r) = cfg.reduction.as_mut() {
                args.reduction.apply(r);
            }
            if let Some(path) = &args.config {
                cfg = merge_json_into(&cfg, &read_config(path)?)?;
            }
            cfg.validate()?;
            let dir = out_dir(&args.out, "max-entry");
            let trace = max_entry_file(&args.input, &cfg, &dir)?;
            Ok(json!({
                "command": "max-entry",
                "out": dir,
                "iterations": trace.iteration_count(),
                "stop_reason": trace.stop_reason,
                "candidates": trace.candidates,
            }))
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string(), 2),
    };
    match run(cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
