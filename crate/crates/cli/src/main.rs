use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fbnet_cli::commands::{self, RunOptions};
use fbnet_cli::config::{parse_config, ExperimentConfig};
use fbnet_core::{Algorithm, TapeMode};

#[derive(Parser)]
#[command(name = "fbnet", version, about = "Train and gradient-check small feedforward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients with finite differences and check layer adjoints.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[command(flatten)]
        backward: BackwardArgs,
    },
    /// Train with per-sample SGD and write the final weights.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backward: BackwardArgs,
    },
    /// Report the loss of saved weights on a dataset.
    Eval {
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// CSV file to use instead of the config's training data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BackwardArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::StorePre)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = AlgoArg::Auto)]
    algo: AlgoArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StorePre,
    StoreOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dense,
    General,
    Auto,
}

impl BackwardArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            mode: match self.mode {
                ModeArg::StorePre => TapeMode::StorePreactivations,
                ModeArg::StoreOut => TapeMode::StoreOutputs,
            },
            algorithm: match self.algo {
                AlgoArg::Dense => Algorithm::Dense,
                AlgoArg::General => Algorithm::General,
                AlgoArg::Auto => Algorithm::Auto,
            },
            ..RunOptions::default()
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Gradcheck {
            config,
            eps,
            tol,
            backward,
        } => {
            let config = read_config(&config)?;
            let options = RunOptions {
                epsilon: eps,
                tolerance: tol,
                ..backward.options()
            };
            Ok(commands::gradcheck(&config, &options, out)?.pass())
        }
        Command::Train {
            config,
            out: weights,
            backward,
        } => {
            let config = read_config(&config)?;
            commands::train(&config, &backward.options(), &weights, out)?;
            Ok(true)
        }
        Command::Eval {
            config,
            weights,
            data,
        } => {
            let config = read_config(&config)?;
            commands::eval(&config, &weights, data.as_deref(), out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = run(cli, &mut out);
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(true), Ok(())) => ExitCode::SUCCESS,
        (Ok(false), Ok(())) => ExitCode::FAILURE,
        (Err(e), _) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        (_, Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
