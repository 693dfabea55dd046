//! `snn`: train, evaluate and export single-spike temporal SNNs.
//!
//! Exit codes: 0 success, 1 usage/config/model error, 2 dataset or I/O
//! error, 3 training divergence.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "snn", version, about = "Multiplication-free single-spike SNN training and FPGA cost model")]
struct Cli {
    /// Dataset cache root (overrides SNN_DATA_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download (or import) and verify a dataset into the cache.
    Fetch(FetchArgs),
    /// Train a network from a config file.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset's test split.
    Eval(EvalArgs),
    /// Per-class active-synapse statistics of a saved model.
    Sparsity(EvalArgs),
    /// Write per-neuron BRAM weight images for a saved model.
    ExportBram(ExportArgs),
    /// Print the cycle and throughput model for an architecture.
    Hwreport(HwArgs),
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// digits, mnist or fashion-mnist
    pub dataset: String,
    /// Install from local files instead of downloading.
    #[arg(long, value_name = "DIR")]
    pub from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub gamma: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// real or fixed
    #[arg(long)]
    pub mode: Option<String>,
    /// Train on a class-stratified subset of this many samples.
    #[arg(long)]
    pub subset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: String,
    /// Seed of the train/test split (digits only).
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Target margin used for the reported loss; dataset default if omitted.
    #[arg(long)]
    pub gamma: Option<u32>,
    /// Print a JSON report instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Directory for the CSV output.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HwArgs {
    /// Take architecture and hardware settings from a config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Comma-separated layer sizes, e.g. 64,20,10.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub fmax_mhz: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let cache = cli.cache_dir.unwrap_or_else(snn_core::datasets::default_cache_dir);
    let result = match cli.command {
        Command::Fetch(a) => commands::fetch(&a, &cache),
        Command::Train(a) => commands::train(&a, &cache),
        Command::Eval(a) => commands::eval(&a, &cache),
        Command::Sparsity(a) => commands::sparsity(&a, &cache),
        Command::ExportBram(a) => commands::export_bram(&a),
        Command::Hwreport(a) => commands::hwreport(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
