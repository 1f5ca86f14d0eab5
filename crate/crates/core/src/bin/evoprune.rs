use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use evoprune_core::dataset::{load_dataset, DatasetFormat};
use evoprune_core::harness::{report_table, run_experiment, Mode, RunConfig, RunReport};
use evoprune_core::synth::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "evoprune",
    version,
    about = "Evolutionary mask search for classifier heads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a GA mode (evolve-neurons-L1, evolve-neurons-L2, evolve-both, evolve-connections, evolve-fs).
    Evolve(RunArgs),
    /// Run a pruning baseline (baseline-weight, baseline-neuron, baseline-polydecay).
    Baseline(BaselineArgs),
    /// Train the dense reference or the fixed-width grid.
    Reference(RunArgs),
    /// Combine report.json files from several output directories into one table.
    Report(ReportArgs),
    /// Load a feature file and print its shape and class counts.
    ValidateDataset(ValidateArgs),
    /// Write a synthetic train/test pair in the binary feature format.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    evals: Option<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Target sparsity; overrides the config.
    #[arg(long)]
    sparsity: Option<f64>,
    /// GA output directory (or report.json) whose mean active fraction sets the sparsity.
    #[arg(long)]
    reference_report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directories or report.json files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write report.csv and report.txt here instead of printing only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    path: PathBuf,
    #[arg(long)]
    format: Option<DatasetFormat>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    informative: usize,
    #[arg(long, default_value_t = 600)]
    train: usize,
    #[arg(long, default_value_t = 300)]
    test: usize,
    #[arg(long, default_value_t = 0.6)]
    separation: f32,
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Some(r) = args.runs {
        cfg.n_runs = r;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(e) = args.evals {
        cfg.ga.max_evals = e;
    }
    Ok(cfg)
}

fn run(cfg: RunConfig, expect: fn(Mode) -> bool, what: &str) -> anyhow::Result<()> {
    if !expect(cfg.mode) {
        bail!("mode {} is not a {what} mode", cfg.mode);
    }
    let report = run_experiment(&cfg)?;
    print!("{}", report_table(std::slice::from_ref(&report)).text);
    eprintln!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn write_table(reports: &[RunReport], out: Option<&Path>) -> anyhow::Result<()> {
    let table = report_table(reports);
    print!("{}", table.text);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), &table.csv)?;
        std::fs::write(dir.join("report.txt"), &table.text)?;
    }
    Ok(())
}

fn main_inner(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Evolve(args) => run(load_config(&args)?, Mode::is_evolve, "GA"),
        Command::Reference(args) => run(load_config(&args)?, Mode::is_reference, "reference"),
        Command::Baseline(args) => {
            let mut cfg = load_config(&args.run)?;
            if let Some(s) = args.sparsity {
                cfg.baseline.sparsity = Some(s);
            }
            if let Some(p) = args.reference_report {
                cfg.baseline.reference_report = Some(p);
                if args.sparsity.is_none() {
                    cfg.baseline.sparsity = None;
                }
            }
            run(cfg, Mode::is_baseline, "baseline")
        }
        Command::Report(args) => {
            let reports = args
                .inputs
                .iter()
                .map(RunReport::load)
                .collect::<Result<Vec<_>, _>>()?;
            write_table(&reports, args.out.as_deref())
        }
        Command::ValidateDataset(args) => {
            let format = args
                .format
                .unwrap_or_else(|| DatasetFormat::from_path(&args.path));
            let ds = load_dataset(&args.path, format)?;
            println!(
                "{}: n={} d={} C={}",
                args.path.display(),
                ds.n_samples(),
                ds.feature_dim(),
                ds.n_classes()
            );
            let counts: Vec<String> = ds.class_counts().iter().map(|c| c.to_string()).collect();
            println!("class counts: {}", counts.join(" "));
            Ok(())
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                n_classes: args.classes,
                feature_dim: args.dim,
                informative: args.informative,
                n_train: args.train,
                n_test: args.test,
                separation: args.separation,
                seed: args.seed,
            };
            let (train, test) = generate(&spec)?;
            std::fs::create_dir_all(&args.out)?;
            train.save_binary(args.out.join("train.eptl"))?;
            test.save_binary(args.out.join("test.eptl"))?;
            eprintln!("wrote {}/{{train,test}}.eptl", args.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
