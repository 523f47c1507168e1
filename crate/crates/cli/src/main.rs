//! `grbm`: train Gaussian RBMs, pick a stopping epoch by approximated mutual
//! information, and evaluate the features with a linear SVM.

mod commands;
mod config;
mod error;
mod rundir;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "grbm", version, about)]
struct Cli {
    /// key=value config file; unlisted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Run directory. Relative paths resolve under $GRBM_OUT_ROOT when set.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Overrides the `stop.theta` key.
    #[arg(long, global = true, value_name = "REAL", allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true, value_name = "COUNT")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// 2-D mixture experiment with the exact likelihood gradient.
    Toy,
    /// Unsupervised GRBM training with per-epoch AMI and checkpoints.
    Train {
        /// Continue an interrupted run from its saved session.
        #[arg(long)]
        resume: bool,
        /// Stop after this epoch; `--resume` continues to `train.epochs`.
        #[arg(long, value_name = "EPOCH")]
        until: Option<usize>,
    },
    /// Choose the stopping checkpoint for `--theta` (or `stop.theta`).
    SelectStop,
    /// Pooled features of the selected checkpoint.
    Features,
    /// Train the L2-SVM on the features and report test accuracy.
    Classify,
    /// Training, selection for every θ in `stop.thetas`, and classification.
    Pipeline,
    /// Oracle checks on seeded tiny models.
    Verify,
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        theta: cli.theta,
    };
    match cli.command {
        Command::Toy => commands::cmd_toy(&ctx),
        Command::Train { resume, until } => commands::cmd_train(&ctx, resume, until),
        Command::SelectStop => commands::cmd_select_stop(&ctx),
        Command::Features => commands::cmd_features(&ctx),
        Command::Classify => commands::cmd_classify(&ctx),
        Command::Pipeline => commands::cmd_pipeline(&ctx),
        Command::Verify => commands::cmd_verify(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("grbm: {e}");
            e.exit_code()
        }
    }
}
