//! `forestvar` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid flags or configuration, 2 runtime failure.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use forestvar::data::{load_csv, read_table, save_csv};
use forestvar::experiment::{
    read_results_csv, run_experiment, write_figure_csvs, ExperimentConfig, RunOptions,
};
use forestvar::ij_variance::{BiasCorrection, VarianceOptions};
use forestvar::simgen::{gen_dataset, SimFunction, SimulationSpec};
use forestvar::{fit_forest, predict_with_variance, ForestConfig, ForestModel, Learner, ResampleMode};

use manifest::{beside, now_unix, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "forestvar", version, about = "Random forests with infinitesimal-jackknife variance estimates")]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a forest to a CSV dataset and save it as JSON.
    Train(TrainArgs),
    /// Predict with IJ variance estimates for every row of a CSV file.
    Predict(PredictArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
    /// Run the replicated simulation study.
    Experiment(ExperimentArgs),
    /// Turn results.csv into one plot-data CSV per sample size.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long)]
    tree_type: Learner,
    #[arg(long)]
    resample: ResampleMode,
    /// Candidate variables per split [default: max(floor(p/3), 1)].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    mtry: Option<u64>,
    /// Number of trees [default: 5n].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    b: Option<u64>,
    /// Subsample size [default: round(n^0.7)].
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    s: Option<u64>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    min_node_size: u64,
    /// Significance level for conditional-inference splits.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "forest.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV holding (at least) the model's feature columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    bias_correction: BiasCorrection,
    /// Clamp corrected variances at zero.
    #[arg(long)]
    floor_variance: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    spec: SimFunction,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Factor grid to start from; explicit factor flags override it.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, value_delimiter = ',')]
    specs: Option<Vec<SimFunction>>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mtry_levels: Option<Vec<u8>>,
    #[arg(long, value_delimiter = ',')]
    tree_types: Option<Vec<Learner>>,
    #[arg(long, value_delimiter = ',')]
    resample_modes: Option<Vec<ResampleMode>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    test_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trees per forest [default: 5n].
    #[arg(long)]
    b: Option<usize>,
    /// Subsample size [default: round(n^0.7)].
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<f64>,
    /// Continue from this checkpoint [default checkpoint: <out>/checkpoint.jsonl].
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many newly computed cells.
    #[arg(long)]
    max_cells: Option<usize>,
    /// Skip the per-cell detail CSVs.
    #[arg(long)]
    no_detail: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("{a} is outside (0, 1)"))
    }
}

/// Invalid input detected before any expensive work (exit code 1).
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 1;
    }
    match err.downcast_ref::<forestvar::Error>() {
        Some(
            forestvar::Error::InvalidParameter(_)
            | forestvar::Error::InvalidData(_)
            | forestvar::Error::DimensionMismatch { .. }
            | forestvar::Error::MissingColumn(_)
            | forestvar::Error::UnknownSimulation { .. },
        ) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads as usize)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
        Command::Simulate(args) => simulate(args),
        Command::Experiment(args) => experiment(args),
        Command::Report(args) => report(args),
    }
}

fn check_parent(out: &Path) -> Result<()> {
    match out.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(invalid(format!(
            "--out: directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let started = now_unix();
    check_parent(&args.out)?;
    let data = load_csv(&args.data, &args.response)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let (n, p) = (data.n(), data.p());
    let mut config = ForestConfig::with_defaults(args.tree_type, args.resample, n, p);
    if let Some(m) = args.mtry {
        if m as usize > p {
            return Err(invalid(format!("--mtry {m} exceeds the {p} feature columns")));
        }
        config.mtry = m as usize;
    }
    if let Some(b) = args.b {
        config.n_trees = b as usize;
    }
    if let Some(s) = args.s {
        if args.resample == ResampleMode::Bootstrap {
            log::warn!("--s is ignored for bootstrap forests");
        } else if s as usize > n {
            return Err(invalid(format!("--s {s} exceeds the {n} training rows")));
        }
        config.subsample_size = s as usize;
    }
    config.min_node_size = args.min_node_size as usize;
    config.alpha = args.alpha;
    config.seed = args.seed;
    config.validate(n, p)?;

    let forest = fit_forest(&data, &config)?;
    forest.save(&args.out)?;
    let resolved = json!({
        "data": args.data,
        "response": args.response,
        "n": n,
        "p": p,
        "forest": config,
    });
    RunManifest::new("train", resolved, Some(args.seed), started)
        .finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

fn predict(args: PredictArgs) -> Result<()> {
    let started = now_unix();
    check_parent(&args.out)?;
    let forest = ForestModel::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    if forest.n_trees() < 2 {
        return Err(invalid("variance estimation needs a model with at least 2 trees"));
    }
    let table = read_table(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let rows = table.select_rows(forest.column_names()).map_err(|e| {
        invalid(format!(
            "{} does not match the model's feature columns ({}): {e}",
            args.data.display(),
            forest.column_names().join(",")
        ))
    })?;
    let options = VarianceOptions {
        correction: args.bias_correction,
        floor: args.floor_variance,
    };
    let results = predict_with_variance(&forest, &rows, options)?;

    let mut body =
        String::from("row,prediction,variance_raw,variance_correction,variance_corrected\n");
    for (i, (pred, v)) in results.iter().enumerate() {
        writeln!(body, "{i},{pred},{},{},{}", v.raw, v.correction, v.corrected)?;
    }
    fs::write(&args.out, body).with_context(|| format!("writing {}", args.out.display()))?;
    let resolved = json!({
        "model": args.model,
        "data": args.data,
        "rows": rows.len(),
        "bias_correction": args.bias_correction,
        "floor_variance": args.floor_variance,
    });
    RunManifest::new("predict", resolved, Some(forest.config().seed), started)
        .finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let started = now_unix();
    check_parent(&args.out)?;
    let spec = SimulationSpec::new(args.spec, args.n as usize, args.seed)?;
    save_csv(&gen_dataset(&spec), &args.out)?;
    RunManifest::new("simulate", serde_json::to_value(spec)?, Some(args.seed), started)
        .finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

fn experiment_config(args: &ExperimentArgs) -> ExperimentConfig {
    let mut config = match args.preset {
        Preset::Desk => ExperimentConfig::desk(),
        Preset::Paper => ExperimentConfig::paper(),
    };
    if let Some(v) = &args.specs {
        config.specs = v.clone();
    }
    if let Some(v) = &args.n_values {
        config.n_values = v.clone();
    }
    if let Some(v) = &args.mtry_levels {
        config.mtry_levels = v.clone();
    }
    if let Some(v) = &args.tree_types {
        config.tree_types = v.clone();
    }
    if let Some(v) = &args.resample_modes {
        config.resample_modes = v.clone();
    }
    if let Some(v) = args.replicates {
        config.replicates = v;
    }
    if let Some(v) = args.test_points {
        config.test_points = v;
    }
    if let Some(v) = args.seed {
        config.master_seed = v;
    }
    if args.b.is_some() {
        config.n_trees_override = args.b;
    }
    if args.s.is_some() {
        config.subsample_override = args.s;
    }
    if let Some(v) = args.min_node_size {
        config.min_node_size = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    config
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let started = now_unix();
    let config = experiment_config(&args);
    config.validate().map_err(|e| invalid(e.to_string()))?;
    if args.out.exists() && !args.out.is_dir() {
        return Err(invalid(format!("--out {} is not a directory", args.out.display())));
    }
    let checkpoint = match &args.resume {
        Some(path) if !path.is_file() => {
            return Err(invalid(format!("--resume: {} not found", path.display())))
        }
        Some(path) => path.clone(),
        None => {
            let path = args.out.join("checkpoint.jsonl");
            if path.exists() {
                return Err(invalid(format!(
                    "{} already exists; pass --resume {} to continue it",
                    path.display(),
                    path.display()
                )));
            }
            path
        }
    };
    for warning in config.cost_warnings() {
        eprintln!("warning: {warning}");
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let options = RunOptions {
        checkpoint: Some(checkpoint.clone()),
        max_new_cells: args.max_cells,
    };
    let result = run_experiment(&config, &options)?;

    let results_path = args.out.join("results.csv");
    result.write_results_csv(&results_path)?;
    let mut outputs = vec![results_path];
    if !args.no_detail {
        outputs.extend(result.write_detail_csvs(&args.out)?);
    }
    let resolved = json!({
        "experiment": config,
        "checkpoint": checkpoint,
        "max_cells": args.max_cells,
        "complete": result.is_complete(),
        "failed_cells": result.failures.len(),
        "result_digest": result.digest(),
    });
    RunManifest::new("experiment", resolved, Some(config.master_seed), started)
        .finish(&outputs, &args.out.join("manifest.json"))?;

    if !result.is_complete() {
        eprintln!(
            "stopped after {} of {} cells; rerun with --resume {} to continue",
            result.cells.len() + result.failures.len(),
            config.cells().len(),
            checkpoint.display()
        );
    }
    if !result.failures.is_empty() {
        let labels: Vec<String> = result
            .failures
            .iter()
            .map(|f| format!("{} ({})", f.key.label(), f.message))
            .collect();
        bail!("MAPB undefined for {} cell(s): {}", labels.len(), labels.join("; "));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let started = now_unix();
    if args.out.exists() && !args.out.is_dir() {
        return Err(invalid(format!("--out {} is not a directory", args.out.display())));
    }
    let rows = read_results_csv(&args.results)
        .with_context(|| format!("reading {}", args.results.display()))?;
    if rows.is_empty() {
        return Err(anyhow!("{} has no result rows", args.results.display()));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let outputs = write_figure_csvs(&rows, &args.out)?;
    let resolved = json!({ "results": args.results, "rows": rows.len() });
    RunManifest::new("report", resolved, None, started)
        .finish(&outputs, &args.out.join("manifest.json"))
}
