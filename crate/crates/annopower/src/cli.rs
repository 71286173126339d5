//! Command-line surface: fit, simulate, sweep, report, calibrate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{alpha_label, parse_config};
use crate::fitting::{ingest_long_csv, map_fit};
use crate::generator::GenerationConfig;
use crate::inference::{calibrate_null, run_test, PValueMethod, TestOptions};
use crate::metrics::MetricKind;
use crate::presets;
use crate::results::{
    read_results_csv, summarize_report, write_fit_document, write_results_csv, write_scores,
};
use crate::sampling::DirichletParams;
use crate::sweep::{cell_seed, find_min_budget, run_sweep, MinimumEntry, SweepOptions};

/// Simulation-backed power analysis for annotation budgets.
#[derive(Debug, Parser)]
#[command(name = "annopower", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit Dirichlet concentrations to a long-format label CSV.
    Fit {
        /// Input CSV with header item_id,label[,rater_id].
        #[arg(long)]
        input: PathBuf,
        /// Where to write the fit document (JSON).
        #[arg(long)]
        output: PathBuf,
        /// Convergence tolerance on the maximum relative parameter change.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
    },
    /// Run one budget split to a test result.
    Simulate {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        epsilon: f64,
        /// Total annotation budget N x K.
        #[arg(long)]
        nk: u64,
        /// Responses per item; N = floor(nk / k).
        #[arg(long)]
        k: u32,
        /// accuracy | tv | wins | kl.
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// KL smoothing constant.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Write the alternative-hypothesis replicate scores here, one
        /// per line.
        #[arg(long)]
        emit_scores: Option<PathBuf>,
        /// all-pairs | mean-vs-null.
        #[arg(long, default_value = "all-pairs")]
        p_method: String,
        /// Share item parameters and gold between hypotheses.
        #[arg(long)]
        paired: bool,
    },
    /// Run a full experiment grid from a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; a summary lands next to it as <output>.summary.json.
        #[arg(long)]
        output: PathBuf,
        /// Overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker count (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Record per-cell failures instead of failing fast.
        #[arg(long)]
        keep_going: bool,
    },
    /// Summarize a results CSV: lowest budget per metric and epsilon.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        p_threshold: f64,
    },
    /// Measure the null rejection rate at epsilon = 0.
    Calibrate {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        nk: u64,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        metric: String,
        /// Independent calibration runs.
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Replicates per run and hypothesis.
        #[arg(long, default_value_t = 300)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct PriorArgs {
    /// Preset name (Toxicity | DICES | D3code | JobsQ1 | JobsQ3 |
    /// balanced:M | unbalanced:M).
    #[arg(long, conflicts_with = "alpha")]
    preset: Option<String>,
    /// Literal concentrations, comma-separated (e.g. 1.37,1.33).
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
}

impl PriorArgs {
    fn resolve(&self) -> Result<(String, DirichletParams), CliError> {
        match (&self.preset, &self.alpha) {
            (Some(name), None) => presets::resolve(name).map_err(CliError::usage),
            (None, Some(values)) => {
                let alpha = DirichletParams::new(values.clone()).map_err(CliError::usage)?;
                Ok((alpha_label(values), alpha))
            }
            _ => Err(CliError::Usage("specify exactly one of --preset and --alpha".into())),
        }
    }
}

/// Exit-code classification: 2 for usage/config problems, 3 for
/// runtime/data problems.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(err: impl std::fmt::Display) -> Self {
        CliError::Usage(err.to_string())
    }

    fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

/// Parses argv and runs the selected subcommand.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit {
            input,
            output,
            tol,
            max_iters,
        } => cmd_fit(&input, &output, tol, max_iters),
        Command::Simulate {
            prior,
            epsilon,
            nk,
            k,
            metric,
            replicates,
            seed,
            lambda,
            emit_scores,
            p_method,
            paired,
        } => cmd_simulate(
            &prior,
            epsilon,
            nk,
            k,
            &metric,
            replicates,
            seed,
            lambda,
            emit_scores.as_deref(),
            &p_method,
            paired,
        ),
        Command::Sweep {
            config,
            output,
            seed,
            threads,
            keep_going,
        } => cmd_sweep(&config, &output, seed, threads, keep_going),
        Command::Report { input, p_threshold } => cmd_report(&input, p_threshold),
        Command::Calibrate {
            prior,
            nk,
            k,
            metric,
            repeats,
            replicates,
            threshold,
            lambda,
            seed,
        } => cmd_calibrate(&prior, nk, k, &metric, repeats, replicates, threshold, lambda, seed),
    }
}

fn open_input(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_fit(input: &Path, output: &Path, tol: f64, max_iters: usize) -> Result<(), CliError> {
    let data = ingest_long_csv(open_input(input)?).map_err(CliError::runtime)?;
    let fit = map_fit(&data, tol, max_iters).map_err(CliError::runtime)?;
    let mut sink = create_output(output)?;
    write_fit_document(&fit, &data, &mut sink).map_err(CliError::runtime)?;
    sink.flush().map_err(CliError::runtime)?;
    println!(
        "items={} categories={} responses={} iterations={} converged={}",
        data.n_items(),
        data.n_categories(),
        data.total_responses(),
        fit.iterations,
        fit.converged
    );
    println!("mab={}", fit.mab);
    Ok(())
}

fn split_budget(nk: u64, k: u32) -> Result<usize, CliError> {
    if nk == 0 || k == 0 {
        return Err(CliError::Usage("--nk and --k must be positive".into()));
    }
    let n = nk / k as u64;
    if n < 2 {
        return Err(CliError::Usage(format!(
            "n = floor({nk}/{k}) = {n} leaves fewer than 2 items"
        )));
    }
    Ok(n as usize)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    prior: &PriorArgs,
    epsilon: f64,
    nk: u64,
    k: u32,
    metric: &str,
    replicates: usize,
    seed: u64,
    lambda: f64,
    emit_scores: Option<&Path>,
    p_method: &str,
    paired: bool,
) -> Result<(), CliError> {
    let (_, alpha) = prior.resolve()?;
    let metric: MetricKind = metric.parse().map_err(CliError::usage)?;
    let p_method: PValueMethod = p_method.parse().map_err(CliError::usage)?;
    let n = split_budget(nk, k)?;
    let rho = DirichletParams::uniform(alpha.len()).map_err(CliError::usage)?;
    let config =
        GenerationConfig::new(n, k as usize, alpha, rho, epsilon).map_err(CliError::usage)?;
    let options = TestOptions {
        replicates,
        lambda,
        p_method,
        paired,
    };
    let seed_spec = cell_seed(seed, nk, k);
    let (result, alt, _null) =
        run_test(&config, metric, &options, &seed_spec, nk).map_err(CliError::runtime)?;
    if let Some(path) = emit_scores {
        let mut sink = create_output(path)?;
        write_scores(&alt.scores, &mut sink).map_err(CliError::runtime)?;
        sink.flush().map_err(CliError::runtime)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&result).map_err(CliError::runtime)?
    );
    Ok(())
}

fn summary_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    output.with_file_name(name)
}

fn cmd_sweep(
    config_path: &Path,
    output: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    keep_going: bool,
) -> Result<(), CliError> {
    let mut spec = parse_config(open_input(config_path)?).map_err(CliError::usage)?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    let options = SweepOptions {
        parallelism: threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
        }),
        keep_going,
    };
    if options.parallelism == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let report = run_sweep(&spec, &options).map_err(CliError::runtime)?;
    let mut sink = create_output(output)?;
    write_results_csv(&report, &mut sink).map_err(CliError::runtime)?;
    sink.flush().map_err(CliError::runtime)?;

    let summary = summarize_report(&report, 0.05).map_err(CliError::runtime)?;
    let mut summary_sink = create_output(&summary_path(output))?;
    serde_json::to_writer_pretty(&mut summary_sink, &summary).map_err(CliError::runtime)?;
    summary_sink.flush().map_err(CliError::runtime)?;

    println!(
        "cells={} active={} skipped={} -> {}",
        summary.total_cells,
        summary.active_cells,
        summary.skipped_cells,
        output.display()
    );
    print_minima(&summary.min_budget, 0.05);
    Ok(())
}

fn print_minima(minima: &[MinimumEntry], threshold: f64) {
    for entry in minima {
        match &entry.best {
            Some(best) => println!(
                "metric={} epsilon={}: nk={} k={} n={} p={} delta={} ci_width={}",
                entry.metric, entry.epsilon, best.nk, best.k, best.n, best.p_value, best.delta,
                best.ci_width
            ),
            None => println!(
                "metric={} epsilon={}: not achieved (threshold {threshold})",
                entry.metric, entry.epsilon
            ),
        }
    }
}

fn cmd_report(input: &Path, p_threshold: f64) -> Result<(), CliError> {
    let report = read_results_csv(open_input(input)?).map_err(CliError::runtime)?;
    let minima = find_min_budget(&report, p_threshold);
    print_minima(&minima, p_threshold);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    prior: &PriorArgs,
    nk: u64,
    k: u32,
    metric: &str,
    repeats: usize,
    replicates: usize,
    threshold: f64,
    lambda: f64,
    seed: u64,
) -> Result<(), CliError> {
    let (_, alpha) = prior.resolve()?;
    let metric: MetricKind = metric.parse().map_err(CliError::usage)?;
    let n = split_budget(nk, k)?;
    let rho = DirichletParams::uniform(alpha.len()).map_err(CliError::usage)?;
    let config = GenerationConfig::new(n, k as usize, alpha, rho, 0.0).map_err(CliError::usage)?;
    let seed_spec = cell_seed(seed, nk, k);
    let report = calibrate_null(&config, metric, repeats, replicates, lambda, threshold, &seed_spec)
        .map_err(CliError::runtime)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(CliError::runtime)?
    );
    Ok(())
}
