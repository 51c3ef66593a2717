//! Compressing classical data against quantum side information, at desk scale.
//!
//! A classical source `X` is correlated with a quantum system `Q` through an
//! ensemble `{rho_x, p(x)}`. The decoder holds `Q^n`; the encoder sends a code
//! index at rate approaching `H(X|Q) = H(X) - I(X;Q)`, where `I(X;Q)` is the
//! Holevo information of the ensemble. This crate builds every ingredient of
//! that protocol concretely for small blocklengths:
//!
//! - [`linalg`]: dense complex Hermitian matrices, spectra, partial traces;
//! - [`cq`]: ensembles, entropic rate quantities, measurement-induced
//!   ensembles, n-fold extensions;
//! - [`typicality`]: strongly typical sequence sets and (conditionally)
//!   typical subspace projectors;
//! - [`coding`]: square-root-measurement channel codes and the greedy
//!   disjoint-code cover that yields the source encoder/decoder;
//! - [`sim`]: exact and Monte Carlo protocol execution, disturbance
//!   accounting, the converse inequality ledger, and the two one-shot BB84
//!   demonstrations.
//!
//! Everything is deterministic given a seed: Monte Carlo trials draw from
//! counter-based per-trial substreams, and all parallel loops (feature
//! `parallel`, on by default) merge in index order, so results are identical
//! for any worker count.

#![forbid(unsafe_code)]

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod cq;
pub mod coding;
pub mod linalg;
mod par;
pub mod sim;
pub mod typicality;

pub use cq::CqEnsemble;
pub use coding::{ChannelCode, CqswCode};
pub use linalg::{ComplexMatrix, DensityOperator, HermitianSpectrum, Povm};
pub use typicality::{TypicalProjector, TypicalSet};

/// Resource caps for dense-matrix work and sequence enumeration.
///
/// `max_dense_dim` bounds the Hilbert-space dimension `d^n` of any
/// materialized operator; `max_enumeration` bounds the number of classical
/// sequences `|X|^n` an exact (non Monte Carlo) computation may visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_dense_dim: usize,
    pub max_enumeration: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self { max_dense_dim: 8192, max_enumeration: 1 << 24 }
    }
}

impl Caps {
    /// `dim^n` if it stays within the dense-dimension cap.
    pub(crate) fn dense_power(&self, dim: usize, n: usize) -> Result<usize> {
        let p = (dim as u64)
            .checked_pow(n as u32)
            .filter(|&p| p <= self.max_dense_dim as u64)
            .ok_or(Error::DenseDimCap { dim, n, cap: self.max_dense_dim })?;
        Ok(p as usize)
    }

    /// `alphabet^n` if it stays within the enumeration cap.
    pub(crate) fn enumeration_power(&self, alphabet: usize, n: usize) -> Result<u64> {
        (alphabet as u64)
            .checked_pow(n as u32)
            .filter(|&p| p <= self.max_enumeration)
            .ok_or(Error::EnumerationCap { alphabet, n, cap: self.max_enumeration })
    }
}

/// Errors across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("trace is not 1 (got {0})")]
    NonUnitTrace(f64),

    #[error("POVM does not resolve the identity (max deviation {0:.3e})")]
    PovmIncomplete(f64),

    #[error("POVM element {index}: {source}")]
    PovmElement { index: usize, source: Box<Error> },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("symbol index {index} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { index: usize, alphabet: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration of {alphabet}^{n} sequences exceeds cap {cap}; use the Monte Carlo path")]
    EnumerationCap { alphabet: usize, n: usize, cap: u64 },

    #[error("dense dimension {dim}^{n} exceeds cap {cap}")]
    DenseDimCap { dim: usize, n: usize, cap: usize },

    #[error("candidate set carries probability {mass:.3e}, below the threshold eta = {eta:.3e}")]
    CandidateMassTooLow { mass: f64, eta: f64 },

    #[error(
        "no codeword satisfies the error criterion: best singleton error {best_singleton_error} \
         exceeds epsilon = {epsilon}"
    )]
    EmptyCode { best_singleton_error: f64, epsilon: f64 },

    #[error("square-root measurement is ill-conditioned (support conditioning {conditioning:.3e})")]
    IllConditioned { conditioning: f64 },

    #[error("cover construction failed after {built} codes (remaining probability {remaining:.6}): {source}")]
    CoverFailed {
        built: usize,
        remaining: f64,
        source: Box<Error>,
        /// Codes constructed before the failure, for diagnostics.
        partial: Vec<coding::ChannelCode>,
    },

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
