//! `bteb`: evaluation, tabulation and reproduction commands for Bayes,
//! empirical Bayes and monotone empirical Bayes estimation of the
//! Borel-Tanner reproduction number.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl From<bteb_core::Error> for CliError {
    fn from(e: bteb_core::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

/// Environment variable consulted when `--out` is absent.
pub const OUT_DIR_ENV: &str = "BTEB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "bteb", version, about = "Borel-Tanner empirical Bayes toolkit")]
pub struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory (default: $BTEB_OUT_DIR, else the current directory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Config override, e.g. --set prior.kind=beta (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct HistoryArgs {
    /// File of observed totals (whitespace separated). Without it a history
    /// is drawn from the configured prior.
    #[arg(long, value_name = "PATH")]
    pub history: Option<PathBuf>,

    /// History size when drawing (default: first configured n).
    #[arg(long)]
    pub n: Option<usize>,

    /// Replication index selecting the random stream.
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// pmf and cdf over a range of x.
    Dist {
        #[arg(long)]
        r: Option<u64>,
        #[arg(long)]
        theta: f64,
        /// First x (default r).
        #[arg(long)]
        x_from: Option<u64>,
        #[arg(long)]
        x_to: u64,
    },
    /// Bayes rule, posterior second moment and marginal on the support.
    BayesTable,
    /// Empirical Bayes table from one history.
    Eb(HistoryArgs),
    /// Empirical Bayes table and its monotonization.
    Monotonize {
        #[command(flatten)]
        history: HistoryArgs,
        /// Also dump alpha and D*(.; x) for these x (comma separated).
        #[arg(long, value_delimiter = ',')]
        dump: Vec<u64>,
    },
    /// Bayes risk, MLE regret and the replicated regret table.
    ReproduceStudy,
    /// EB, monotone EB and Bayes estimates from one replication.
    Figure1 {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        r: Option<u64>,
        #[arg(long, default_value_t = 0)]
        rep: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bteb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
