//! `cfmsa`: synthetic data, training, evaluation, inference and gradient
//! checks for the counterfactual fusion model.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "cfmsa", version, about = "Counterfactual multimodal fusion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Feature file, or a directory holding train/val/test.jsonl.
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Comma-separated inference modes, or `all`.
    #[arg(long, global = true, value_name = "te,tie-text,tie-image,tie-joint")]
    modes: Option<String>,
    #[arg(long, global = true, value_name = "random|prior|uniform|nonuniform")]
    c_mode: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr_main: Option<f64>,
    #[arg(long, global = true)]
    lr_c: Option<f64>,
    /// Omit the wall-clock field so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic biased benchmark (train/val/test.jsonl).
    Synth,
    /// Train a model; writes checkpoint.json and history.jsonl.
    Train,
    /// Evaluate a checkpoint; prints the comparison table.
    Eval,
    /// Per-mode prediction for one sample (by --id, or a JSON record on stdin).
    Infer {
        #[arg(long)]
        id: Option<String>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CFMSA_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CFMSA_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let c = cli.common;
    let overrides = Overrides {
        seed: c.seed,
        data: c.data,
        out: c.out,
        checkpoint: c.checkpoint,
        modes: c.modes,
        c_mode: c.c_mode,
        epochs: c.epochs,
        batch_size: c.batch_size,
        lr_main: c.lr_main,
        lr_c: c.lr_c,
        no_timestamp: c.no_timestamp,
    };
    let rc = RunConfig::resolve(c.config.as_deref(), overrides)?;
    match cli.command {
        Command::Synth => commands::synth(&rc),
        Command::Train => commands::train_cmd(&rc),
        Command::Eval => commands::eval_cmd(&rc),
        Command::Infer { id } => commands::infer_cmd(&rc, id.as_deref()),
        Command::Gradcheck => commands::gradcheck_cmd(&rc),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
