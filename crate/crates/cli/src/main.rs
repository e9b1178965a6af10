//! `bioledger`: train biohash models, enroll and verify users against a
//! storage scheme on the simulated ledger, and produce evaluation and cost
//! reports.

mod commands;
mod config;
mod state;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use bioledger_core::chain::GasReceipt;
use bioledger_core::storage::SchemeKind;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

/// A failure with a stable code, printed as `error[CODE]: message`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.code {
            "E_TAMPER" => 3,
            "E_NOT_FOUND" => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<bioledger_core::Error> for CliError {
    fn from(e: bioledger_core::Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

pub fn print_receipt(label: &str, r: &GasReceipt) {
    println!(
        "{label}: gas={} eth={} usd={} latency_s={:.3}",
        r.gas_used, r.eth_cost, r.usd_cost, r.latency_s
    );
}

#[derive(Debug, Parser)]
#[command(
    name = "bioledger",
    version,
    about = "Biometric template protection on a simulated ledger"
)]
struct Cli {
    /// Flat TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "GWEI")]
    gas_price: Option<f64>,
    #[arg(long, global = true, value_name = "USD")]
    eth_usd: Option<f64>,
    /// Storage scheme: onchain, hash or merkle.
    #[arg(long, global = true)]
    scheme: Option<SchemeKind>,
    /// State directory holding the chain, off-chain store and enrollments.
    #[arg(long, global = true, value_name = "DIR")]
    state: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Genuine pairs to sample (capped at what the dataset offers).
    #[arg(long, default_value_t = 500)]
    pub genuine: usize,
    /// Impostor pairs to sample (capped at what the dataset offers).
    #[arg(long, default_value_t = 500)]
    pub impostor: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Write the table here and a JSON summary next to it; stdout otherwise.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic feature table.
    Synth {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 0.3)]
        intra: f64,
        #[arg(long, default_value_t = 3.0)]
        inter: f64,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train a biohash model on a development dataset.
    Train {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Model artifact to write.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long)]
        theta: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        target_d: Option<usize>,
        #[command(flatten)]
        pairs: PairArgs,
    },
    /// Store a user's template under the configured scheme.
    Enroll {
        #[arg(long)]
        user: u64,
        /// Feature table holding one sample.
        #[arg(long, value_name = "PATH")]
        sample: PathBuf,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Store fixed-point features instead of protected bits.
        #[arg(long)]
        unprotected: bool,
    },
    /// Check integrity and match a probe against a user's template.
    Verify {
        #[arg(long)]
        user: u64,
        #[arg(long, value_name = "PATH")]
        probe: PathBuf,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Accept when the distance is at most this; defaults to the model's
        /// development threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Remove a user's template.
    Delete {
        #[arg(long)]
        user: u64,
    },
    /// EER of unprotected and protected matching.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Separate development population for training; defaults to the
        /// evaluation dataset.
        #[arg(long, value_name = "PATH")]
        dev_dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        thetas: Vec<usize>,
        #[command(flatten)]
        pairs: PairArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// EER and accuracy against the number of features kept.
    Sweep {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[command(flatten)]
        pairs: PairArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Gas, ETH, USD and latency for the reference template sizes.
    CostReport {
        /// Users in the matching-total row.
        #[arg(long, default_value_t = 10_000)]
        users: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Transaction log of the state directory.
    ChainLog {
        /// Print the full ledger state as JSON instead.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(
        cli.config.as_deref(),
        Overrides {
            seed: cli.seed,
            gas_price: cli.gas_price,
            eth_usd: cli.eth_usd,
            scheme: cli.scheme,
            state_dir: cli.state,
        },
    )?;
    commands::dispatch(cfg, cli.command)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
