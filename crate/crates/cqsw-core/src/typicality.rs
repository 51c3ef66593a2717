//! Typical sequence sets and (conditionally) typical subspace projectors.
//!
//! Sequences use strong (frequency) typicality: `x^n` is typical when every
//! letter frequency is within `delta` of its probability and letters of
//! probability zero do not occur. Subspaces use entropy typicality: the
//! projector spans the eigenvectors of `rho^(x)n` whose eigenvalue product
//! satisfies `|-(1/n) log2(product) - H(rho)| <= delta`. The two notions meet
//! through the conversion `delta' = delta * sum_x |log2 p(x)|`: every strongly
//! typical sequence is entropy-typical at window `delta'`, and the
//! cardinality bounds `2^{n(H +- delta')}` follow.
//!
//! Projectors are kept in factorized form (per-position eigenbases plus the
//! list of included index tuples); the dense matrix is materialized on demand.
//! Eigenvalue products are accumulated in log-space so membership tests stay
//! accurate far beyond the dense-dimension cap.

use serde::{Deserialize, Serialize};

use crate::cq::CqEnsemble;
use crate::linalg::{
    entropy_of_spectrum, tensor_product_vec, ComplexMatrix, DensityOperator, C64,
};
use crate::{Caps, Error, Result};

/// Eigenvalues at or below this are excluded from typical windows outright.
const EIGENVALUE_FLOOR: f64 = 1e-12;

/// The strongly typical set `T_{X,delta}` with its exact probability mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypicalSet {
    n: usize,
    delta: f64,
    /// The entropy window implied by `delta`: `delta * sum_x |log2 p(x)|`.
    delta_prime: f64,
    members: Vec<Vec<usize>>,
    total_prob: f64,
}

impl TypicalSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    /// Members in lexicographic order.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_prob(&self) -> f64 {
        self.total_prob
    }

    pub fn contains(&self, xn: &[usize]) -> bool {
        self.members.binary_search_by(|m| m.as_slice().cmp(xn)).is_ok()
    }
}

/// Membership test, decidable without enumeration: every letter frequency
/// within `delta` of its probability, and no letter of probability zero.
pub fn is_strongly_typical(probs: &[f64], xn: &[usize], delta: f64) -> bool {
    let n = xn.len();
    if n == 0 {
        return false;
    }
    let mut counts = vec![0usize; probs.len()];
    for &x in xn {
        if x >= probs.len() {
            return false;
        }
        counts[x] += 1;
    }
    probs.iter().zip(&counts).all(|(&p, &c)| {
        if p == 0.0 {
            c == 0
        } else {
            (c as f64 / n as f64 - p).abs() <= delta
        }
    })
}

/// `delta' = delta * sum over the support of |log2 p(x)|`, the entropy window
/// implied by frequency typicality at `delta`.
pub fn implied_entropy_delta(probs: &[f64], delta: f64) -> f64 {
    delta * probs.iter().filter(|&&p| p > 0.0).map(|&p| p.log2().abs()).sum::<f64>()
}

/// Enumerate `T_{X,delta}` in lexicographic order.
///
/// The search walks sequences depth-first, abandoning any prefix whose letter
/// count already exceeds its frequency ceiling `n (p(x) + delta)`.
pub fn typical_set(probs: &[f64], n: usize, delta: f64, caps: &Caps) -> Result<TypicalSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    crate::cq::shannon_entropy(probs)?; // validates the distribution
    caps.enumeration_power(probs.len(), n)?;

    let ceilings: Vec<f64> = probs.iter().map(|&p| n as f64 * (p + delta)).collect();
    let mut members = Vec::new();
    let mut total_prob = 0.0;
    let mut seq = vec![0usize; n];
    let mut counts = vec![0usize; probs.len()];

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        probs: &[f64],
        delta: f64,
        ceilings: &[f64],
        n: usize,
        depth: usize,
        seq: &mut Vec<usize>,
        counts: &mut Vec<usize>,
        members: &mut Vec<Vec<usize>>,
        total_prob: &mut f64,
    ) {
        if depth == n {
            if is_strongly_typical(probs, seq, delta) {
                members.push(seq.clone());
                let p: f64 = seq.iter().map(|&x| probs[x]).product();
                *total_prob += p;
            }
            return;
        }
        for x in 0..probs.len() {
            if probs[x] == 0.0 {
                continue;
            }
            counts[x] += 1;
            if (counts[x] as f64) <= ceilings[x] {
                seq[depth] = x;
                dfs(probs, delta, ceilings, n, depth + 1, seq, counts, members, total_prob);
            }
            counts[x] -= 1;
        }
    }

    dfs(probs, delta, &ceilings, n, 0, &mut seq, &mut counts, &mut members, &mut total_prob);
    Ok(TypicalSet {
        n,
        delta,
        delta_prime: implied_entropy_delta(probs, delta),
        members,
        total_prob,
    })
}

/// A projector onto a span of product eigenvectors, in factorized form.
///
/// Position `k` carries a `d x d` eigenbasis and its eigenvalues; `tuples`
/// lists the included eigenvector index tuples. The rank is the tuple count;
/// the dense matrix exists only through [`TypicalProjector::matrix`].
#[derive(Debug, Clone)]
pub struct TypicalProjector {
    n: usize,
    delta: f64,
    factor_dim: usize,
    total_dim: usize,
    factor_bases: Vec<ComplexMatrix>,
    factor_eigenvalues: Vec<Vec<f64>>,
    tuples: Vec<Vec<u8>>,
}

impl TypicalProjector {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Dimension of the full space `d^n`.
    pub fn dim(&self) -> usize {
        self.total_dim
    }

    /// Rank of the projector.
    pub fn subspace_dim(&self) -> usize {
        self.tuples.len()
    }

    /// Included eigenvector index tuples, in search order.
    pub fn tuples(&self) -> &[Vec<u8>] {
        &self.tuples
    }

    /// `Tr(rho_ref Pi)` against the product state the projector was built
    /// from: the sum of included eigenvalue products.
    pub fn captured_probability(&self) -> f64 {
        self.tuples
            .iter()
            .map(|t| {
                t.iter()
                    .enumerate()
                    .map(|(k, &i)| self.factor_eigenvalues[k][i as usize])
                    .product::<f64>()
            })
            .sum()
    }

    /// Materialize the dense projector matrix.
    pub fn matrix(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.total_dim, self.total_dim);
        for t in &self.tuples {
            let mut v: Vec<C64> = vec![C64::ONE];
            for (k, &i) in t.iter().enumerate() {
                let basis = &self.factor_bases[k];
                let col: Vec<C64> =
                    (0..self.factor_dim).map(|r| basis[(r, i as usize)]).collect();
                v = tensor_product_vec(&v, &col);
            }
            for (r, &vr) in v.iter().enumerate() {
                if vr == C64::ZERO {
                    continue;
                }
                for (c, &vc) in v.iter().enumerate() {
                    out[(r, c)] += vr * vc.conj();
                }
            }
        }
        out
    }
}

/// Index tuples over `spectrum` of length `n` whose eigenvalue product `P`
/// satisfies `|-(1/n) log2 P - target| <= delta`. Search is depth-first in
/// lexicographic order with branch-and-bound on the achievable log range.
fn window_tuples(spectrum: &[f64], n: usize, target: f64, delta: f64) -> Vec<Vec<u8>> {
    let scores: Vec<Option<f64>> = spectrum
        .iter()
        .map(|&l| if l > EIGENVALUE_FLOOR { Some(-l.log2()) } else { None })
        .collect();
    let finite: Vec<f64> = scores.iter().flatten().copied().collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let s_min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let s_max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = n as f64 * (target - delta);
    let hi = n as f64 * (target + delta);

    let mut tuples = Vec::new();
    let mut current = vec![0u8; n];

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        scores: &[Option<f64>],
        n: usize,
        depth: usize,
        acc: f64,
        lo: f64,
        hi: f64,
        s_min: f64,
        s_max: f64,
        current: &mut Vec<u8>,
        tuples: &mut Vec<Vec<u8>>,
    ) {
        if depth == n {
            if acc >= lo && acc <= hi {
                tuples.push(current.clone());
            }
            return;
        }
        let rest = (n - depth) as f64;
        for (i, s) in scores.iter().enumerate() {
            let Some(s) = s else { continue };
            let next = acc + s;
            // remaining positions contribute between rest-1 copies of the extremes
            if next + (rest - 1.0) * s_min > hi || next + (rest - 1.0) * s_max < lo {
                continue;
            }
            current[depth] = i as u8;
            dfs(scores, n, depth + 1, next, lo, hi, s_min, s_max, current, tuples);
        }
    }

    dfs(&scores, n, 0, 0.0, lo, hi, s_min, s_max, &mut current, &mut tuples);
    tuples
}

/// Projector onto the delta-typical subspace of `rho^(x)n`.
pub fn typical_projector(
    rho: &DensityOperator,
    n: usize,
    delta: f64,
    caps: &Caps,
) -> Result<TypicalProjector> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let total_dim = caps.dense_power(rho.dim(), n)?;
    let spec = rho.spectrum()?;
    let entropy = entropy_of_spectrum(spec.eigenvalues());
    let tuples = window_tuples(spec.eigenvalues(), n, entropy, delta);
    Ok(TypicalProjector {
        n,
        delta,
        factor_dim: rho.dim(),
        total_dim,
        factor_bases: vec![spec.eigenvectors().clone(); n],
        factor_eigenvalues: vec![spec.eigenvalues().to_vec(); n],
        tuples,
    })
}

/// Projector onto the conditionally typical subspace of `rho_{x^n}`.
///
/// Positions are grouped by letter; each letter block gets the delta-typical
/// projector of `rho_x^(x)N(x)` and the blocks are tensored back in sequence
/// position order.
pub fn cond_typical_projector(
    e: &CqEnsemble,
    xn: &[usize],
    delta: f64,
    caps: &Caps,
) -> Result<TypicalProjector> {
    let n = xn.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let total_dim = caps.dense_power(e.dim(), n)?;

    // letters present, ascending, with their positions
    let mut letters: Vec<usize> = xn.to_vec();
    letters.sort_unstable();
    letters.dedup();
    if let Some(&bad) = letters.iter().find(|&&x| x >= e.len()) {
        return Err(Error::SymbolOutOfRange { index: bad, alphabet: e.len() });
    }

    struct Block {
        positions: Vec<usize>,
        tuples: Vec<Vec<u8>>,
        basis: ComplexMatrix,
        eigenvalues: Vec<f64>,
    }
    let mut blocks = Vec::with_capacity(letters.len());
    for &x in &letters {
        let positions: Vec<usize> = (0..n).filter(|&k| xn[k] == x).collect();
        let spec = e.state(x).spectrum()?;
        let entropy = entropy_of_spectrum(spec.eigenvalues());
        let tuples = window_tuples(spec.eigenvalues(), positions.len(), entropy, delta);
        blocks.push(Block {
            positions,
            tuples,
            basis: spec.eigenvectors().clone(),
            eigenvalues: spec.eigenvalues().to_vec(),
        });
    }

    let mut factor_bases = vec![ComplexMatrix::zeros(0, 0); n];
    let mut factor_eigenvalues = vec![Vec::new(); n];
    for b in &blocks {
        for &k in &b.positions {
            factor_bases[k] = b.basis.clone();
            factor_eigenvalues[k] = b.eigenvalues.clone();
        }
    }

    // cross product of the block tuple sets, redistributed onto positions
    let rank: usize = blocks.iter().map(|b| b.tuples.len()).product();
    let mut tuples = Vec::with_capacity(rank);
    let mut choice = vec![0usize; blocks.len()];
    if blocks.iter().all(|b| !b.tuples.is_empty()) {
        loop {
            let mut full = vec![0u8; n];
            for (b, &c) in blocks.iter().zip(&choice) {
                for (slot, &pos) in b.positions.iter().enumerate() {
                    full[pos] = b.tuples[c][slot];
                }
            }
            tuples.push(full);
            if !next_sequence_with_radices(&mut choice, &blocks.iter().map(|b| b.tuples.len()).collect::<Vec<_>>()) {
                break;
            }
        }
    }

    Ok(TypicalProjector {
        n,
        delta,
        factor_dim: e.dim(),
        total_dim,
        factor_bases,
        factor_eigenvalues,
        tuples,
    })
}

fn next_sequence_with_radices(digits: &mut [usize], radices: &[usize]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radices).rev() {
        *d += 1;
        if *d < r {
            return true;
        }
        *d = 0;
    }
    false
}
