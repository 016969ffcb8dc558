//! `strain-sense`: one binary for the whole pipeline.
//!
//! Typical flow:
//!
//! ```text
//! strain-sense gen --profiles default4 --duration 700 --seed 7 -o data.csv
//! strain-sense featurize data.csv -o specs.jsonl
//! strain-sense train specs.jsonl --optimizer adam --lr 0.02 -o model.json
//! strain-sense eval specs.jsonl --model model.json
//! strain-sense embed specs.jsonl --model model.json -o embedding.csv
//! strain-sense watch live.csv --model model.json
//! ```
//!
//! Every subcommand is deterministic for fixed inputs, flags and seed. The
//! seed comes from `--seed`, else the `STRAIN_SENSE_SEED` environment
//! variable, else the documented default 7.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV_VAR: &str = "STRAIN_SENSE_SEED";

#[derive(Parser)]
#[command(name = "strain-sense", version, about = "Strain spectrogram classification pipeline")]
pub struct Cli {
    /// Print a machine-readable summary JSON to stdout on success.
    #[arg(long, global = true)]
    pub json: bool,

    /// Verbose diagnostics on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    /// Seed for anything randomized (overrides STRAIN_SENSE_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset as canonical CSV.
    Gen {
        /// Profile bundle: "default4", "impact3", or a JSON profile file.
        #[arg(long, default_value = "default4")]
        profiles: String,
        /// Seconds of signal per class.
        #[arg(long, default_value_t = 700.0)]
        duration: f64,
        /// Output canonical CSV path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Convert a wide per-class CSV into the canonical long format.
    Import {
        input: PathBuf,
        /// Name of the time column.
        #[arg(long)]
        time_column: String,
        /// Class column name; repeat once per class.
        #[arg(long = "label", required = true)]
        labels: Vec<String>,
        /// Seconds to drop from the end of every series.
        #[arg(long, default_value_t = 0.0)]
        trim_tail_s: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Window a canonical CSV and write normalized spectrograms (JSON Lines
    /// plus a .norm.json sidecar with the scaling statistics).
    Featurize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a classifier on a featurized batch and evaluate the held-out
    /// test split.
    Train {
        spectrograms: PathBuf,
        /// gd | adagrad | adam
        #[arg(long, default_value = "adam")]
        optimizer: String,
        #[arg(long, default_value_t = 0.02)]
        lr: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Fraction of all items that goes to training (rest is the test set).
        #[arg(long, default_value_t = 0.85)]
        train_fraction: f64,
        /// Fraction of the training portion carved out for validation.
        #[arg(long, default_value_t = 0.15)]
        val_fraction: f64,
        #[arg(long, default_value_t = 8)]
        growth_rate: usize,
        /// Output model file.
        #[arg(short, long)]
        output: PathBuf,
        /// Directory for report.json, cost_curve.csv and confusion.csv.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Train one model per optimizer candidate and tabulate the results.
    Sweep {
        spectrograms: PathBuf,
        /// Comma-separated kind:learning-rate pairs,
        /// e.g. gd:0.0002,adagrad:0.002,adam:0.04,adam:0.02
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.85)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0.15)]
        val_fraction: f64,
        #[arg(long, default_value_t = 8)]
        growth_rate: usize,
        /// Output CSV table.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate a trained model on a featurized batch.
    Eval {
        spectrograms: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Directory for confusion.csv.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Embed learned features (or raw spectrograms) in 3D.
    Embed {
        spectrograms: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Embed raw spectrogram bins instead of network features.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 13.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 4.0)]
        exaggeration: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 250)]
        exaggeration_iters: usize,
        #[arg(long, default_value_t = 200.0)]
        learning_rate: f64,
        /// Output CSV of coordinates.
        #[arg(short, long)]
        output: PathBuf,
        /// Also render an SVG scatter here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Tail a growing canonical CSV and classify every 6-second window.
    Watch {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 200)]
        poll_interval_ms: u64,
        /// Append events to this JSON Lines file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Shell command run for every event (event JSON on stdin).
        #[arg(long)]
        on_event: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match commands::run(cli) {
        Ok(summary) => {
            if json {
                println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
