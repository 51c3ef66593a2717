//! Batch front-end for the compression workbench: ensemble ingestion,
//! experiment configuration, deterministic runs, and CSV/manifest emission.

pub mod commands;
pub mod ensemble_file;
pub mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqsw_core::Caps;

#[derive(Parser, Debug)]
#[command(
    name = "cqsw",
    version,
    about = "Compress classical data against quantum side information at small blocklengths"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Entropic rate quantities of an ensemble: H(X), chi, H(X|Q), H(Q), H(Q|X).
    Rates {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Typical set and average-state typical subspace at a blocklength.
    Typical {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        caps: CapsArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Build one square-root-measurement channel code.
    BuildCode {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        seed: u64,
        /// Candidate pool: the typical set or all of X^n.
        #[arg(long, value_enum, default_value_t = CandidatePool::Typical)]
        candidates: CandidatePool,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        /// Write the constructed code as JSON.
        #[arg(long)]
        save_code: Option<std::path::PathBuf>,
        #[command(flatten)]
        caps: CapsArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Greedy disjoint-code cover of the typical set.
    Cover {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        /// Drop the reserved index when the cover is exact and exhaustive.
        #[arg(long, default_value_t = false)]
        drop_reserved: bool,
        #[arg(long)]
        save_code: Option<std::path::PathBuf>,
        #[command(flatten)]
        caps: CapsArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Build (or load) a cover and measure P_e and Delta, exactly and by
    /// Monte Carlo.
    Simulate {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        /// Load a previously saved code instead of rebuilding.
        #[arg(long)]
        code: Option<std::path::PathBuf>,
        #[command(flatten)]
        caps: CapsArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Evaluate the converse inequality chain for a constructed code.
    ConverseAudit {
        #[command(flatten)]
        ensemble: EnsembleArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        seed: u64,
        /// Trials for the Monte Carlo P_e fallback beyond the enumeration cap.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long)]
        code: Option<std::path::PathBuf>,
        #[command(flatten)]
        caps: CapsArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// The 1-bit BB84 protocol: rate 1 against H(X) = 2, zero error, zero
    /// disturbance.
    Bb84Oneshot {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate the BB84 measurement with 1 shared random bit + 1
    /// communicated bit and compare with the direct 2-bit measurement.
    Bb84MeasureSim {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
pub struct EnsembleArg {
    /// Preset name (bb84, orthogonal-pair, zero-plus) or path to an ensemble
    /// JSON file.
    #[arg(long)]
    pub ensemble: String,
}

#[derive(Args, Debug)]
pub struct OutArg {
    /// CSV output path; a run manifest is written next to it. Without this
    /// the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct CapsArgs {
    /// Largest dense Hilbert-space dimension d^n.
    #[arg(long, default_value_t = 8192)]
    pub max_dense_dim: usize,
    /// Largest sequence count |X|^n an exact computation may enumerate.
    #[arg(long, default_value_t = 1 << 24)]
    pub max_enum: u64,
}

impl CapsArgs {
    pub fn to_caps(self) -> Caps {
        Caps { max_dense_dim: self.max_dense_dim, max_enumeration: self.max_enum }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Mc,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Mc => "mc",
            Mode::Both => "both",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePool {
    Typical,
    All,
}

/// Process exit codes: 0 success, 2 validation failure, 3 assertion failure,
/// 4 resource cap.
pub fn exit_code_for(err: &cqsw_core::Error) -> i32 {
    use cqsw_core::Error::*;
    match err {
        EnumerationCap { .. } | DenseDimCap { .. } => 4,
        EmptyCode { .. } | IllConditioned { .. } | CoverFailed { .. } | Internal(_) => 3,
        _ => 2,
    }
}
