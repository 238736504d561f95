//! `pgrec`: one binary for the whole pipeline. Synthesizes datasets, checks
//! ingested files, trains the grouped and baseline predictors, evaluates
//! them with sampled negatives, sweeps the weight ceiling, and runs the
//! price-influence and revenue analyses.
//!
//! Conventions shared by every subcommand:
//! - stdout carries machine-readable TSV only; diagnostics go to stderr,
//!   gated by `PGREC_LOG={error|info|debug}`;
//! - artifact-producing commands write a `manifest.tsv` (command line, seed,
//!   dataset hash, code version, timestamp) beside their outputs;
//! - identical inputs and seeds give byte-identical outputs, whatever
//!   `--threads` says; the manifest timestamp is the only moving part.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod exit;
mod manifest;

use commands::{EvaluateArgs, SweepArgs, TrainArgs};
use exit::{CliError, CliResult, USAGE};
use pgrec_core::predictors::ModelKind;

#[derive(Parser)]
#[command(name = "pgrec", version, about = "Group recommendation with price-guided member weighting")]
struct Cli {
    /// Worker threads for evaluation fan-out; 0 means all cores. Results
    /// are byte-identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a planted price-influence signal.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Generator overrides, one `key = value` per line.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Load a dataset directory and report its shape, or fail loudly.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model family to train.
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
        /// Training seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Loss override: pairwise, mse, or bce.
        #[arg(long)]
        loss: Option<String>,
        /// Weight ceiling for price-adaptive aggregation.
        #[arg(long)]
        beta: Option<f64>,
        /// Training overrides, one `key = value` per line.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out window.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Path to a checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Ranking cutoffs, comma-separated.
        #[arg(long, default_value = "1,5,10")]
        k: String,
        /// Seed for candidate-negative sampling.
        #[arg(long, default_value_t = 5)]
        seed: u64,
        /// Directory for the report; defaults to the working directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write per-case candidates, scores, and ranks.
        #[arg(long)]
        dump_rankings: bool,
        /// Also write per-member aggregation weights per test case.
        #[arg(long)]
        dump_weights: bool,
    },
    /// Train and evaluate the price-adaptive model across weight ceilings.
    SweepBeta {
        #[arg(long)]
        data: PathBuf,
        /// Ceilings to sweep, comma-separated.
        #[arg(long, default_value = "1,5,10")]
        betas: String,
        #[arg(long, default_value = "1,5,10")]
        k: String,
        /// Seed for both training and candidate sampling.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Training overrides applied to every ceiling.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Attribute rank-1 hits to their heaviest member and test the price
    /// tails for frequent-buyer dominance.
    AnalyzeInfluence {
        #[arg(long)]
        data: PathBuf,
        /// Path to a checkpoint of a model with member weights.
        #[arg(long)]
        model: PathBuf,
        /// Seed for candidate-negative sampling.
        #[arg(long, default_value_t = 5)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cumulative revenue along each group's full catalog ranking.
    AnalyzeGmv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences on a tiny
    /// fixture; exits 3 on failure.
    GradCheck {
        /// Parameter initialization seed.
        #[arg(long, default_value_t = 23)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        beta: f64,
    },
    /// Welch-test evaluation runs against the best competing run.
    Compare {
        /// Run directories, each holding two or more eval reports.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Metric column to compare.
        #[arg(long, default_value = "hr@10")]
        metric: String,
        /// Significance level for the t-test.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: pgrec_core::Error| e.to_string())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits; everything else is
            // flag misuse.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => USAGE,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };

    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("PGREC_LOG", "error"),
    )
    .format_timestamp(None)
    .init();

    let argv: Vec<String> = std::env::args().collect();
    if let Err(e) = run(&cli, &argv) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }

    match &cli.command {
        Command::Synth { out, seed, config } => {
            commands::synth(argv, out, *seed, config.as_deref())
        }
        Command::Validate { data } => commands::validate(data),
        Command::Train { data, model, out, seed, loss, beta, config } => {
            commands::train_cmd(
                argv,
                &TrainArgs {
                    data: data.clone(),
                    model: *model,
                    out: out.clone(),
                    seed: *seed,
                    loss: loss.clone(),
                    beta: *beta,
                    config: config.clone(),
                },
            )
        }
        Command::Evaluate { data, model, k, seed, out, dump_rankings, dump_weights } => {
            commands::evaluate(
                argv,
                &EvaluateArgs {
                    data: data.clone(),
                    model: model.clone(),
                    k: k.clone(),
                    seed: *seed,
                    out: out.clone(),
                    dump_rankings: *dump_rankings,
                    dump_weights: *dump_weights,
                },
            )
        }
        Command::SweepBeta { data, betas, k, seed, out, config } => {
            commands::sweep(
                argv,
                &SweepArgs {
                    data: data.clone(),
                    betas: betas.clone(),
                    k: k.clone(),
                    seed: *seed,
                    out: out.clone(),
                    config: config.clone(),
                },
            )
        }
        Command::AnalyzeInfluence { data, model, seed, out } => {
            commands::analyze_influence(argv, data, model, *seed, out)
        }
        Command::AnalyzeGmv { data, model, out } => commands::analyze_gmv(argv, data, model, out),
        Command::GradCheck { seed, beta } => commands::grad_check_cmd(*seed, *beta),
        Command::Compare { dirs, metric, alpha } => commands::compare(dirs, metric, *alpha),
    }
}
