//! `ppdauc`: run, race and audit the stochastic AUC solvers from a TOML
//! config. Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppdauc::optimizers::Mode;
use ppdauc::Error;

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "ppdauc", version, about = "Stochastic AUC maximization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one optimizer (or `all`) and write traces, checkpoints and a summary.
    Run(Common),
    /// Race every optimizer to a fraction of the full-batch oracle's test AUC.
    Race(Common),
    /// Audit the PL inequality on the Leaky-ReLU construction.
    Plcheck(Common),
    /// Write the train/test split as LIBSVM files.
    Datagen(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theoretical,
    Practical,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Optimizer name or `all`.
    #[arg(long, value_name = "NAME")]
    optimizer: Option<String>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl Common {
    fn load(&self) -> ppdauc::Result<Config> {
        let ov = Overrides {
            seed: self.seed,
            optimizer: self.optimizer.clone(),
            mode: self.mode.map(|m| match m {
                ModeArg::Theoretical => Mode::Theoretical,
                ModeArg::Practical => Mode::Practical,
            }),
        };
        Config::load(self.config.as_deref(), &ov)
    }
}

type Handler = fn(&Config, &std::path::Path) -> ppdauc::Result<()>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::Run(c) => (c, commands::cmd_run),
        Command::Race(c) => (c, commands::cmd_race),
        Command::Plcheck(c) => (c, commands::cmd_plcheck),
        Command::Datagen(c) => (c, commands::cmd_datagen),
    };
    let res = common.load().and_then(|cfg| f(&cfg, &common.out));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config { field, reason }) => {
            eprintln!("error: invalid configuration field `{field}`: {reason}");
            ExitCode::from(2)
        }
        Err(Error::Numeric { step, what }) => {
            eprintln!("error: numeric failure at step {step}: {what}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
