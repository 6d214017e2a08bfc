use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::Config;

/// Exit codes: 0 ok, 1 verification failure, 2 usage/format, 3 I/O, 4 backend.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
    pub fn backend(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "logstamp", version, about = "Merkle-aggregated, KDF-hardened timestamping of rotated log files")]
struct Cli {
    /// key=value file supplying defaults for any long option (dashes become underscores)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a log into one file per retention class
    Split(SplitArgs),
    /// Timestamp a batch of files with a single token
    Stamp(StampArgs),
    /// Check a file against its .tsm marker
    Verify(VerifyArgs),
    /// Compare storage and cost of per-file vs aggregated timestamping
    Estimate(EstimateArgs),
    /// Brute-force feasibility of forging a Merkle path
    Margin(MarginArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Kv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Ledger,
    External,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Ledger file for the local-ledger backend
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Endpoint for the external backend (falls back to TSA_ENDPOINT)
    #[arg(long)]
    pub tsa_endpoint: Option<String>,
    /// Policy OID sent to the external backend
    #[arg(long)]
    pub policy_oid: Option<String>,
}

#[derive(Args, Debug)]
pub struct StampArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Explicit KDF repetitions
    #[arg(long, conflicts_with_all = ["target_seconds", "max_allowed_seconds"])]
    pub repetitions: Option<u64>,
    /// Calibrate repetitions to take about this long on this machine
    #[arg(long, requires = "max_allowed_seconds")]
    pub target_seconds: Option<f64>,
    /// Upper bound on the hardening delay allowed after rotation
    #[arg(long, requires = "target_seconds")]
    pub max_allowed_seconds: Option<f64>,
    /// Hex salt (16 bytes); random when omitted
    #[arg(long)]
    pub salt: Option<String>,
    /// Issue one token per file instead of one per batch
    #[arg(long)]
    pub legacy: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub file: PathBuf,
    pub marker: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Refuse to re-derive markers claiming more repetitions than this
    #[arg(long)]
    pub max_repetitions: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Files per rotation
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub rotations_per_day: Option<u64>,
    #[arg(long)]
    pub days: Option<u64>,
    #[arg(long)]
    pub hash_size: Option<u64>,
    #[arg(long)]
    pub token_size: Option<u64>,
    /// Per-file marker surcharge beyond the Merkle path, in bytes [default: 0]
    #[arg(long, conflicts_with = "tsm_overhead")]
    pub overhead: Option<u64>,
    /// Charge each marker the fixed non-proof size of a .tsm file
    #[arg(long)]
    pub tsm_overhead: bool,
    #[arg(long)]
    pub price: Option<f64>,
    /// Require cost columns (fails without --price)
    #[arg(long)]
    pub costs: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct MarginArgs {
    #[arg(long)]
    pub hash_bits: Option<u32>,
    /// Attack window as log2 seconds
    #[arg(long, conflicts_with_all = ["retention_seconds", "handling_seconds"])]
    pub window_log2: Option<f64>,
    #[arg(long, requires = "handling_seconds")]
    pub retention_seconds: Option<u64>,
    #[arg(long, requires = "retention_seconds")]
    pub handling_seconds: Option<u64>,
    /// Attacker hash rate as log2 hashes per second
    #[arg(long, conflicts_with = "rate_hps")]
    pub rate_log2: Option<f64>,
    #[arg(long)]
    pub rate_hps: Option<f64>,
    /// KDF repetitions each candidate must pay for
    #[arg(long)]
    pub repetitions: Option<u64>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Split(a) => commands::split(a, &cfg),
        Command::Stamp(a) => commands::stamp(a, &cfg),
        Command::Verify(a) => commands::verify(a, &cfg),
        Command::Estimate(a) => commands::estimate(a, &cfg),
        Command::Margin(a) => commands::margin(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("logstamp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
