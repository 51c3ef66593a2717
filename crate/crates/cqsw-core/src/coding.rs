//! Channel codes with square-root-measurement decoders and the greedy
//! disjoint-code cover that turns them into a source code.
//!
//! A channel code is a set of sequences plus a decoding POVM with one element
//! per codeword and one failure element. The decoder is the square-root
//! measurement over typicality-sandwiched codeword operators: with `Pi` the
//! typical projector of the average state and `Pi_c` the conditionally typical
//! projector of codeword `c`,
//!
//! ```text
//! S_c = Pi Pi_c Pi,    Lambda_c = S^{-1/2} S_c S^{-1/2},    S = sum_c S_c,
//! ```
//!
//! with the inverse square root taken on the support of `S`. Per-codeword
//! errors are verified exactly, never assumed from a random-coding bound.
//!
//! The cover construction draws codes `C_1, C_2, ...` from the typical set,
//! removing each code's words from the candidate pool, until the remaining
//! pool probability drops to `epsilon`. Index `M` is reserved for sequences
//! outside every code (an optional flag drops it when the cover is exact and
//! exhaustive). The rate is `(1/n) log2 M`. Identical seeds and parameters
//! reproduce identical codes bit for bit; candidate sampling is
//! probability-weighted without replacement from a seeded stream.

use std::collections::{HashMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cq::{next_sequence, sequence_state, CqEnsemble};
use crate::linalg::{eig_hermitian, ComplexMatrix, Povm, PSEUDO_INVERSE_CUTOFF};
use crate::typicality::{cond_typical_projector, typical_projector, typical_set};
use crate::{par, Caps, Error, Result};

pub type Sequence = Vec<usize>;

/// Label of the decoder's failure outcome.
pub const FAIL_LABEL: &str = "fail";

/// Construction parameters shared by [`build_channel_code`] and
/// [`greedy_cover`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Maximum tolerated per-codeword error.
    pub epsilon: f64,
    /// Typicality window, shared by the sequence set and both projectors.
    pub delta: f64,
    /// Minimum probability mass a candidate set must carry.
    pub eta: f64,
    /// Consecutive failed attempts tolerated per current code size.
    pub patience_factor: usize,
    /// Drop the reserved "otherwise" index when the cover is exact and
    /// exhaustive.
    pub drop_reserved_if_exact: bool,
    pub caps: Caps,
}

impl CodeParams {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            eta: 1e-3,
            patience_factor: 4,
            drop_reserved_if_exact: false,
            caps: Caps::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if self.patience_factor == 0 {
            return Err(Error::InvalidParameter("patience factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// A codeword set with its decoding POVM and verified per-codeword errors.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelCode {
    codewords: Vec<Sequence>,
    decoder: Povm,
    per_codeword_error: Vec<f64>,
}

impl ChannelCode {
    pub fn codewords(&self) -> &[Sequence] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn n(&self) -> usize {
        self.codewords[0].len()
    }

    /// Decoder POVM: one element per codeword, then the failure element.
    pub fn decoder(&self) -> &Povm {
        &self.decoder
    }

    pub fn per_codeword_error(&self) -> &[f64] {
        &self.per_codeword_error
    }

    pub fn max_error(&self) -> f64 {
        self.per_codeword_error.iter().copied().fold(0.0, f64::max)
    }

    /// Channel-code rate `(1/n) log2 |C|`.
    pub fn rate(&self) -> f64 {
        (self.codewords.len() as f64).log2() / self.n() as f64
    }

    /// Position of a codeword inside the code.
    pub fn position(&self, xn: &[usize]) -> Option<usize> {
        self.codewords.iter().position(|c| c == xn)
    }

    /// Recompute every per-codeword error from scratch and compare with the
    /// stored values at `1e-8`.
    pub fn verify_errors(&self, e: &CqEnsemble) -> Result<()> {
        for (j, c) in self.codewords.iter().enumerate() {
            let rho = sequence_state(e, c)?;
            let err = 1.0 - rho.state.matrix().trace_product_re(self.decoder.element(j));
            if (err - self.per_codeword_error[j]).abs() > 1e-8 {
                return Err(Error::Internal(format!(
                    "stored error {} differs from recomputed {err} for codeword {j}",
                    self.per_codeword_error[j]
                )));
            }
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for ChannelCode {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Raw {
            codewords: Vec<Sequence>,
            decoder: Povm,
            per_codeword_error: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        if raw.codewords.is_empty() {
            return Err(D::Error::custom("channel code without codewords"));
        }
        if raw.decoder.len() != raw.codewords.len() + 1 {
            return Err(D::Error::custom(format!(
                "decoder has {} elements for {} codewords",
                raw.decoder.len(),
                raw.codewords.len()
            )));
        }
        if raw.per_codeword_error.len() != raw.codewords.len() {
            return Err(D::Error::custom("per-codeword error length mismatch"));
        }
        Ok(Self {
            codewords: raw.codewords,
            decoder: raw.decoder,
            per_codeword_error: raw.per_codeword_error,
        })
    }
}

/// Shared state for square-root-measurement construction: the average-state
/// typical projector plus per-sequence sandwiched operators and product
/// states, cached across rebuilds.
struct SrmContext<'a> {
    e: &'a CqEnsemble,
    delta: f64,
    caps: Caps,
    pi: ComplexMatrix,
    cache: HashMap<Sequence, CachedWord>,
}

struct CachedWord {
    sandwiched: ComplexMatrix,
    rho: ComplexMatrix,
}

impl<'a> SrmContext<'a> {
    fn new(e: &'a CqEnsemble, n: usize, delta: f64, caps: &Caps) -> Result<Self> {
        let pi = typical_projector(&e.average_state(), n, delta, caps)?.matrix();
        Ok(Self { e, delta, caps: *caps, pi, cache: HashMap::new() })
    }

    fn ensure_cached(&mut self, codewords: &[Sequence]) -> Result<()> {
        let missing: Vec<Sequence> =
            codewords.iter().filter(|c| !self.cache.contains_key(*c)).cloned().collect();
        if missing.is_empty() {
            return Ok(());
        }
        let e = self.e;
        let delta = self.delta;
        let caps = self.caps;
        let pi = &self.pi;
        let computed: Vec<Result<CachedWord>> = par::map_collect(&missing, |c| {
            let pi_c = cond_typical_projector(e, c, delta, &caps)?.matrix();
            let sandwiched = pi.matmul(&pi_c).matmul(pi).hermitian_part();
            let rho = sequence_state(e, c)?.state.matrix().clone();
            Ok(CachedWord { sandwiched, rho })
        });
        for (c, data) in missing.into_iter().zip(computed) {
            self.cache.insert(c, data?);
        }
        Ok(())
    }

    /// POVM elements (one per codeword, no failure element) and exact
    /// per-codeword errors for the given set.
    fn elements_and_errors(
        &mut self,
        codewords: &[Sequence],
    ) -> Result<(Vec<ComplexMatrix>, Vec<f64>)> {
        self.ensure_cached(codewords)?;
        let dim = self.pi.rows();
        let mut s = ComplexMatrix::zeros(dim, dim);
        for c in codewords {
            s.add_assign(&self.cache[c].sandwiched);
        }
        let spec = eig_hermitian(&s)?;
        let lambda_max = spec.eigenvalues().first().copied().unwrap_or(0.0);
        let support_min = spec
            .eigenvalues()
            .iter()
            .copied()
            .filter(|&l| l > PSEUDO_INVERSE_CUTOFF)
            .fold(f64::INFINITY, f64::min);
        if !support_min.is_finite() {
            return Err(Error::IllConditioned { conditioning: 0.0 });
        }
        let conditioning = support_min / lambda_max;
        if conditioning < PSEUDO_INVERSE_CUTOFF {
            return Err(Error::IllConditioned { conditioning });
        }
        let inv_sqrt =
            spec.apply_fn(|l| if l > PSEUDO_INVERSE_CUTOFF { 1.0 / l.sqrt() } else { 0.0 });

        let cache = &self.cache;
        let results: Vec<(ComplexMatrix, f64)> = par::map_collect(codewords, |c| {
            let word = &cache[c];
            let el = inv_sqrt.matmul(&word.sandwiched).matmul(&inv_sqrt).hermitian_part();
            let err = 1.0 - word.rho.trace_product_re(&el).clamp(0.0, 1.0);
            (el, err)
        });
        Ok(results.into_iter().unzip())
    }

    /// Full decoder: per-codeword elements plus the failure element, validated
    /// as a POVM.
    fn decoder(&mut self, codewords: &[Sequence]) -> Result<(Povm, Vec<f64>)> {
        let (elements, errors) = self.elements_and_errors(codewords)?;
        let dim = self.pi.rows();
        let mut fail = ComplexMatrix::identity(dim);
        for el in &elements {
            fail = fail.sub(el);
        }
        let mut all = elements;
        all.push(fail.hermitian_part());
        let mut labels: Vec<String> =
            codewords.iter().map(|c| self.e.sequence_label(c)).collect();
        labels.push(FAIL_LABEL.to_string());
        Ok((Povm::new(all, labels)?, errors))
    }
}

fn check_codewords(e: &CqEnsemble, codewords: &[Sequence]) -> Result<usize> {
    if codewords.is_empty() {
        return Err(Error::InvalidParameter("no codewords".into()));
    }
    let n = codewords[0].len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty codeword".into()));
    }
    let mut seen = HashSet::new();
    for c in codewords {
        if c.len() != n {
            return Err(Error::InvalidParameter("codewords of mixed length".into()));
        }
        if let Some(&bad) = c.iter().find(|&&x| x >= e.len()) {
            return Err(Error::SymbolOutOfRange { index: bad, alphabet: e.len() });
        }
        if !seen.insert(c.clone()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate codeword {:?}",
                c
            )));
        }
    }
    Ok(n)
}

/// Square-root-measurement decoder for a fixed codeword set: one element per
/// codeword plus a failure element.
pub fn srm_decoder(
    e: &CqEnsemble,
    codewords: &[Sequence],
    delta: f64,
    caps: &Caps,
) -> Result<Povm> {
    let n = check_codewords(e, codewords)?;
    let mut ctx = SrmContext::new(e, n, delta, caps)?;
    Ok(ctx.decoder(codewords)?.0)
}

/// Greedy randomized construction of an `(n, epsilon)` channel code inside a
/// candidate set.
///
/// Candidates are drawn probability-weighted without replacement from a
/// stream seeded by `seed`. After each tentative addition the decoder is
/// rebuilt and worst offenders are evicted until every error is back under
/// `epsilon`; an attempt that fails to grow the code counts against a
/// patience budget of `patience_factor * |code|` consecutive misses. The
/// returned code's errors are recomputed from the final decoder, so the
/// `(n, epsilon)` criterion is verified, not assumed. The rate bound of the
/// packing argument is asymptotic and is reported by callers as an audit
/// line only.
pub fn build_channel_code(
    e: &CqEnsemble,
    params: &CodeParams,
    candidates: &[Sequence],
    seed: u64,
) -> Result<ChannelCode> {
    params.validate()?;
    let n = check_codewords(e, candidates)?;
    let mut ctx = SrmContext::new(e, n, params.delta, &params.caps)?;
    build_with_context(&mut ctx, params, candidates, seed)
}

fn build_with_context(
    ctx: &mut SrmContext<'_>,
    params: &CodeParams,
    candidates: &[Sequence],
    seed: u64,
) -> Result<ChannelCode> {
    let e = ctx.e;
    let mut pool: Vec<Sequence> = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let mut weights: Vec<f64> = pool
        .iter()
        .map(|c| e.sequence_prob(c))
        .collect::<Result<_>>()?;
    let mass: f64 = weights.iter().sum();
    if mass < params.eta {
        return Err(Error::CandidateMassTooLow { mass, eta: params.eta });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code: Vec<Sequence> = Vec::new();
    let mut strikes = 0usize;
    let mut best_singleton_error = f64::INFINITY;

    while !pool.is_empty() {
        let patience = params.patience_factor * code.len().max(1);
        if strikes >= patience {
            break;
        }
        let cand = draw_weighted(&mut pool, &mut weights, &mut rng);
        let mut trial = code.clone();
        trial.push(cand);

        // eviction cascade: drop the worst offender until the set conforms
        let outcome = loop {
            match ctx.elements_and_errors(&trial) {
                Err(Error::IllConditioned { .. }) => break None,
                Err(other) => return Err(other),
                Ok((_, errors)) => {
                    let (worst_idx, worst) = errors
                        .iter()
                        .copied()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("nonempty trial");
                    if worst <= params.epsilon {
                        break Some(trial);
                    }
                    if trial.len() == 1 {
                        best_singleton_error = best_singleton_error.min(worst);
                        break None;
                    }
                    trial.remove(worst_idx);
                }
            }
        };

        match outcome {
            Some(t) if t.len() > code.len() => {
                code = t;
                strikes = 0;
            }
            Some(t) if t.len() == code.len() && t != code => {
                // a swap: accepted, but it is not progress
                code = t;
                strikes += 1;
            }
            _ => strikes += 1,
        }
    }

    if code.is_empty() {
        return Err(Error::EmptyCode { best_singleton_error, epsilon: params.epsilon });
    }

    let (decoder, per_codeword_error) = ctx.decoder(&code)?;
    let max = per_codeword_error.iter().copied().fold(0.0, f64::max);
    if max > params.epsilon + 1e-12 {
        return Err(Error::Internal(format!(
            "final decoder error {max} exceeds epsilon {}",
            params.epsilon
        )));
    }
    Ok(ChannelCode { codewords: code, decoder, per_codeword_error })
}

/// Probability-weighted draw without replacement.
fn draw_weighted(pool: &mut Vec<Sequence>, weights: &mut Vec<f64>, rng: &mut ChaCha8Rng) -> Sequence {
    let total: f64 = weights.iter().sum();
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = pool.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if r <= acc {
            pick = i;
            break;
        }
    }
    weights.remove(pick);
    pool.remove(pick)
}

/// A source code: disjoint channel codes, the encoder map, and the reserved
/// "otherwise" index.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "CqswCodeRepr")]
pub struct CqswCode {
    n: usize,
    codes: Vec<ChannelCode>,
    m: usize,
    rate: f64,
    reserved: bool,
    #[serde(skip)]
    encoder_index: HashMap<Sequence, usize>,
}

#[derive(Serialize, Deserialize)]
struct CqswCodeRepr {
    n: usize,
    m: usize,
    rate: f64,
    reserved: bool,
    codes: Vec<ChannelCode>,
}

impl From<CqswCode> for CqswCodeRepr {
    fn from(c: CqswCode) -> Self {
        Self { n: c.n, m: c.m, rate: c.rate, reserved: c.reserved, codes: c.codes }
    }
}

impl<'de> Deserialize<'de> for CqswCode {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CqswCodeRepr::deserialize(deserializer)?;
        let rebuilt = CqswCode::assemble(repr.codes, repr.reserved).map_err(D::Error::custom)?;
        if rebuilt.m != repr.m || rebuilt.n != repr.n {
            return Err(D::Error::custom("code file header disagrees with its codes"));
        }
        if (rebuilt.rate - repr.rate).abs() > 1e-12 {
            return Err(D::Error::custom("code file rate disagrees with its codes"));
        }
        Ok(rebuilt)
    }
}

impl CqswCode {
    fn assemble(codes: Vec<ChannelCode>, reserved: bool) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::InvalidParameter("a source code needs at least one channel code".into()));
        }
        let n = codes[0].n();
        if codes.iter().any(|c| c.n() != n) {
            return Err(Error::InvalidParameter("channel codes of mixed blocklength".into()));
        }
        let mut encoder_index = HashMap::new();
        for (i, code) in codes.iter().enumerate() {
            for c in code.codewords() {
                if encoder_index.insert(c.clone(), i + 1).is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "codeword {c:?} appears in two channel codes"
                    )));
                }
            }
        }
        let m = codes.len() + usize::from(reserved);
        let rate = (m as f64).log2() / n as f64;
        Ok(Self { n, codes, m, rate, reserved, encoder_index })
    }

    /// Assemble a source code from externally built channel codes.
    ///
    /// With `drop_reserved_if_exact`, the reserved index is dropped when the
    /// codes exactly partition the whole of `X^n` (checked by enumeration
    /// under the cap); otherwise it is kept.
    pub fn from_codes(
        e: &CqEnsemble,
        codes: Vec<ChannelCode>,
        drop_reserved_if_exact: bool,
        caps: &Caps,
    ) -> Result<Self> {
        let with_reserved = Self::assemble(codes, true)?;
        if !drop_reserved_if_exact {
            return Ok(with_reserved);
        }
        let total = caps.enumeration_power(e.len(), with_reserved.n)?;
        let covered = with_reserved.encoder_index.len() as u64;
        if covered == total {
            Self::assemble(with_reserved.codes, false)
        } else {
            Ok(with_reserved)
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn codes(&self) -> &[ChannelCode] {
        &self.codes
    }

    /// Number of encoder indices, including the reserved one when present.
    pub fn m(&self) -> usize {
        self.m
    }

    /// `(1/n) log2 M`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn has_reserved_index(&self) -> bool {
        self.reserved
    }

    /// The encoder map `f`: the 1-based index of the channel code containing
    /// `x^n`, or `M` for sequences outside every code.
    pub fn encode(&self, xn: &[usize]) -> usize {
        assert_eq!(xn.len(), self.n, "sequence length does not match the code blocklength");
        self.encoder_index.get(xn).copied().unwrap_or(self.m)
    }

    /// Probability that a source sequence falls outside every channel code.
    pub fn residual_probability(&self, e: &CqEnsemble) -> Result<f64> {
        let mut covered = 0.0;
        for code in &self.codes {
            for c in code.codewords() {
                covered += e.sequence_prob(c)?;
            }
        }
        Ok((1.0 - covered).max(0.0))
    }

    /// Largest per-codeword error across all channel codes.
    pub fn max_codeword_error(&self) -> f64 {
        self.codes.iter().map(|c| c.max_error()).fold(0.0, f64::max)
    }
}

/// Diagnostics of a cover construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoverSummary {
    /// Probability of the typical set the cover drew from.
    pub typical_prob: f64,
    /// Probability left in the candidate pool when construction stopped.
    pub stopped_at_prob: f64,
    /// `Pr{x^n not in any code}`.
    pub residual_prob: f64,
    /// `Pr{X^n not typical} + epsilon`, the bound the residual must meet.
    pub residual_bound: f64,
}

/// Greedy disjoint-code cover of the typical set.
///
/// Codes are constructed inside `A_1 = T_{X,delta}`, `A_{i+1} = A_i - C_i`
/// until the leftover probability drops to `epsilon` (or construction fails,
/// in which case the partial cover is attached to the error). The residual
/// probability is required to meet `Pr{X^n not typical} + epsilon`.
pub fn greedy_cover(
    e: &CqEnsemble,
    n: usize,
    params: &CodeParams,
    seed: u64,
) -> Result<(CqswCode, CoverSummary)> {
    params.validate()?;
    let t = typical_set(e.probs(), n, params.delta, &params.caps)?;
    let typical_prob = t.total_prob();
    let mut ctx = SrmContext::new(e, n, params.delta, &params.caps)?;
    let mut available: Vec<Sequence> = t.members().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes: Vec<ChannelCode> = Vec::new();

    let pool_prob = |pool: &[Sequence]| -> Result<f64> {
        let mut acc = 0.0;
        for c in pool {
            acc += e.sequence_prob(c)?;
        }
        Ok(acc)
    };

    if t.total_prob() <= params.epsilon {
        return Err(Error::InvalidParameter(format!(
            "the typical set at delta = {} carries probability {} <= epsilon = {}; there is \
             nothing to cover (widen delta or lower epsilon)",
            params.delta,
            t.total_prob(),
            params.epsilon
        )));
    }

    let stopped_at_prob = loop {
        let remaining = pool_prob(&available)?;
        if remaining <= params.epsilon {
            break remaining;
        }
        let code_seed = rng.next_u64();
        match build_with_context(&mut ctx, params, &available, code_seed) {
            Ok(code) => {
                let members: HashSet<&Sequence> = code.codewords().iter().collect();
                available.retain(|c| !members.contains(c));
                codes.push(code);
            }
            Err(source) => {
                return Err(Error::CoverFailed {
                    built: codes.len(),
                    remaining,
                    source: Box::new(source),
                    partial: codes,
                });
            }
        }
    };

    let code = CqswCode::from_codes(e, codes, params.drop_reserved_if_exact, &params.caps)?;
    let residual_prob = code.residual_probability(e)?;
    let residual_bound = (1.0 - typical_prob) + params.epsilon;
    if residual_prob > residual_bound + 1e-9 {
        return Err(Error::Internal(format!(
            "cover residual {residual_prob} exceeds its bound {residual_bound}"
        )));
    }
    Ok((code, CoverSummary { typical_prob, stopped_at_prob, residual_prob, residual_bound }))
}

/// Exact protocol figures computed over all of `X^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    /// `P_e = sum p(x^n) Pr{decoded != x^n}`; sequences mapped to the
    /// reserved index count as full errors.
    pub p_e: f64,
    /// `Delta = sum p(x^n) || residual(x^n) - rho_{x^n} ||_1` under the
    /// square-root instrument; uncovered sequences are left unmeasured.
    pub delta: f64,
}

/// Enumerate `X^n` and evaluate `P_e` and `Delta` exactly from Born
/// probabilities.
pub fn exact_code_metrics(code: &CqswCode, e: &CqEnsemble, caps: &Caps) -> Result<ExactMetrics> {
    let n = code.n();
    let total = caps.enumeration_power(e.len(), n)?;

    // per code: square roots of every decoder element, and codeword positions
    let sqrt_elements: Vec<Vec<ComplexMatrix>> = {
        let per_code: Vec<Result<Vec<ComplexMatrix>>> = par::map_collect(code.codes(), |c| {
            c.decoder()
                .elements()
                .iter()
                .map(crate::linalg::psd_sqrt)
                .collect::<Result<Vec<_>>>()
        });
        per_code.into_iter().collect::<Result<Vec<_>>>()?
    };

    const CHUNK: u64 = 1 << 14;
    let mut p_e = 0.0;
    let mut delta = 0.0;
    let mut start = 0u64;
    while start < total {
        let len = CHUNK.min(total - start) as usize;
        let terms: Vec<Result<(f64, f64)>> = par::map_range(len, |offset| {
            let xn = index_to_sequence(start + offset as u64, n, e.len());
            sequence_metrics(code, e, &xn, &sqrt_elements)
        });
        for t in terms {
            let (pe, d) = t?;
            p_e += pe;
            delta += d;
        }
        start += CHUNK;
    }
    Ok(ExactMetrics { p_e, delta })
}

fn sequence_metrics(
    code: &CqswCode,
    e: &CqEnsemble,
    xn: &[usize],
    sqrt_elements: &[Vec<ComplexMatrix>],
) -> Result<(f64, f64)> {
    let p = e.sequence_prob(xn)?;
    if p == 0.0 {
        return Ok((0.0, 0.0));
    }
    let i = code.encode(xn);
    if i > code.codes().len() {
        // reserved index: encoding error, no measurement, no disturbance
        return Ok((p, 0.0));
    }
    let channel = &code.codes()[i - 1];
    let j = channel.position(xn).ok_or_else(|| Error::Internal("encoder map out of sync".into()))?;
    let rho = sequence_state(e, xn)?.state;
    let success = rho.matrix().trace_product_re(channel.decoder().element(j)).clamp(0.0, 1.0);
    let residual = crate::sim::averaged_residual(rho.matrix(), &sqrt_elements[i - 1]);
    let dist = crate::linalg::trace_norm(&residual.sub(rho.matrix()))?;
    Ok((p * (1.0 - success), p * dist))
}

pub(crate) fn index_to_sequence(mut idx: u64, n: usize, alphabet: usize) -> Sequence {
    let mut xn = vec![0usize; n];
    for slot in xn.iter_mut().rev() {
        *slot = (idx % alphabet as u64) as usize;
        idx /= alphabet as u64;
    }
    xn
}

/// All sequences of length `n`, lexicographic.
pub fn all_sequences(alphabet: usize, n: usize, caps: &Caps) -> Result<Vec<Sequence>> {
    let total = caps.enumeration_power(alphabet, n)?;
    let mut out = Vec::with_capacity(total as usize);
    let mut xn = vec![0usize; n];
    loop {
        out.push(xn.clone());
        if !next_sequence(&mut xn, alphabet) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::{bb84_ensemble, orthogonal_pair_ensemble, zero_plus_ensemble, CqEnsemble};
    use crate::linalg::{DensityOperator, C64};
    use approx::assert_abs_diff_eq;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn srm_orthogonal_codewords_have_zero_error() {
        let e = orthogonal_pair_ensemble();
        let words = all_sequences(2, 3, &caps()).unwrap();
        let povm = srm_decoder(&e, &words, 0.5, &caps()).unwrap();
        assert_eq!(povm.len(), 9); // 8 codewords + fail
        for (j, w) in words.iter().enumerate() {
            let rho = sequence_state(&e, w).unwrap();
            let succ = rho.state.matrix().trace_product_re(povm.element(j));
            assert_abs_diff_eq!(succ, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn srm_single_codeword_error_bound() {
        let e = zero_plus_ensemble();
        let word = vec![vec![0usize, 1, 0, 1]];
        let povm = srm_decoder(&e, &word, 0.5, &caps()).unwrap();
        let rho = sequence_state(&e, &word[0]).unwrap();
        let success = rho.state.matrix().trace_product_re(povm.element(0));

        // direct evaluation of Tr(rho Pi Pi_c Pi): the support-projector
        // decoder can only do better
        let pi = typical_projector(&e.average_state(), 4, 0.5, &caps()).unwrap().matrix();
        let pi_c = cond_typical_projector(&e, &word[0], 0.5, &caps()).unwrap().matrix();
        let sand = pi.matmul(&pi_c).matmul(&pi);
        let lower = rho.state.matrix().trace_product_re(&sand);
        assert!(success >= lower - 1e-10, "{success} < {lower}");
    }

    #[test]
    fn srm_identical_states_are_indistinguishable() {
        let e = CqEnsemble::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
            ],
        )
        .unwrap();
        let words = vec![vec![0usize], vec![1usize]];
        let povm = srm_decoder(&e, &words, 0.5, &caps()).unwrap();
        let mut worst = 0.0f64;
        for (j, w) in words.iter().enumerate() {
            let rho = sequence_state(&e, w).unwrap();
            let err = 1.0 - rho.state.matrix().trace_product_re(povm.element(j));
            worst = worst.max(err);
        }
        assert!(worst >= 0.5 - 1e-10, "exchange symmetry forces error >= 1/2, got {worst}");
    }

    #[test]
    fn build_code_orthogonal_takes_everything() {
        let e = orthogonal_pair_ensemble();
        let candidates = all_sequences(2, 3, &caps()).unwrap();
        let params = CodeParams::new(0.01, 0.5);
        let code = build_channel_code(&e, &params, &candidates, 11).unwrap();
        assert_eq!(code.len(), 8);
        assert!(code.max_error() <= 1e-10);
    }

    #[test]
    fn build_code_bb84_single_basis() {
        let e = bb84_ensemble();
        let candidates = vec![vec![0usize], vec![1usize]];
        let params = CodeParams::new(0.01, 0.5);
        let code = build_channel_code(&e, &params, &candidates, 3).unwrap();
        assert_eq!(code.len(), 2);
        assert!(code.max_error() <= 1e-10);
    }

    #[test]
    fn build_code_reports_infeasible_epsilon() {
        // two identical letters cannot be told apart below error 1/2
        let e = CqEnsemble::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
            ],
        )
        .unwrap();
        let params = CodeParams::new(0.4, 0.5);
        // singleton codes are fine; pairs are not, so the build still succeeds
        let candidates = vec![vec![0usize], vec![1usize]];
        let code = build_channel_code(&e, &params, &candidates, 5).unwrap();
        assert_eq!(code.len(), 1);

        // an epsilon below the single-codeword floor is reported
        let e2 = zero_plus_ensemble();
        let params2 = CodeParams::new(1e-9, 0.35);
        let cands2 = all_sequences(2, 4, &caps()).unwrap();
        let built = build_channel_code(&e2, &params2, &cands2, 5);
        assert!(matches!(built, Err(Error::EmptyCode { .. })));
    }

    #[test]
    fn build_code_candidate_mass_threshold() {
        let e = zero_plus_ensemble();
        let mut params = CodeParams::new(0.2, 0.5);
        params.eta = 0.5;
        let candidates = vec![vec![0usize, 0, 0, 0]]; // mass 1/16
        assert!(matches!(
            build_channel_code(&e, &params, &candidates, 1),
            Err(Error::CandidateMassTooLow { .. })
        ));
    }

    #[test]
    fn cover_orthogonal_pair_is_one_code() {
        let e = orthogonal_pair_ensemble();
        let params = CodeParams::new(0.01, 0.5);
        let (code, summary) = greedy_cover(&e, 3, &params, 7).unwrap();
        assert_eq!(code.codes().len(), 1);
        assert_eq!(code.m(), 2);
        assert_abs_diff_eq!(code.rate(), (2.0f64).log2() / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(summary.residual_prob, 0.0, epsilon = 1e-12);
        assert!(summary.residual_prob <= summary.residual_bound + 1e-12);
    }

    #[test]
    fn cover_deterministic_source() {
        let e = CqEnsemble::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 0.0],
            vec![
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
                DensityOperator::from_pure(&[C64::ZERO, C64::ONE]).unwrap(),
            ],
        )
        .unwrap();
        let params = CodeParams::new(0.1, 0.3);
        let (code, _) = greedy_cover(&e, 4, &params, 1).unwrap();
        assert_eq!(code.codes().len(), 1);
        assert_eq!(code.codes()[0].codewords(), &[vec![0usize, 0, 0, 0]]);
        assert_eq!(code.m(), 2);
    }

    #[test]
    fn cover_is_deterministic_across_runs() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (a, _) = greedy_cover(&e, 4, &params, 42).unwrap();
        let (b, _) = greedy_cover(&e, 4, &params, 42).unwrap();
        assert_eq!(a.m(), b.m());
        for (ca, cb) in a.codes().iter().zip(b.codes()) {
            assert_eq!(ca.codewords(), cb.codewords());
            assert_eq!(ca.per_codeword_error(), cb.per_codeword_error());
        }
        let (c, _) = greedy_cover(&e, 4, &params, 43).unwrap();
        let same = a.codes().len() == c.codes().len()
            && a.codes().iter().zip(c.codes()).all(|(x, y)| x.codewords() == y.codewords());
        assert!(!same, "different seeds should explore differently");
    }

    #[test]
    fn cover_codes_are_disjoint() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 9).unwrap();
        let mut seen = HashSet::new();
        for c in code.codes() {
            for w in c.codewords() {
                assert!(seen.insert(w.clone()), "shared codeword {w:?}");
            }
        }
    }

    #[test]
    fn encode_matches_exhaustive_search() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 17).unwrap();
        for xn in all_sequences(2, 4, &caps()).unwrap() {
            let i = code.encode(&xn);
            let brute = code
                .codes()
                .iter()
                .position(|c| c.codewords().iter().any(|w| w == &xn))
                .map(|p| p + 1)
                .unwrap_or(code.m());
            assert_eq!(i, brute);
        }
    }

    #[test]
    fn bb84_fixed_cover_drops_reserved_index() {
        let e = bb84_ensemble();
        let params = CodeParams::new(0.01, 0.5);
        let c1 = build_channel_code(&e, &params, &[vec![0], vec![1]], 1).unwrap();
        let c2 = build_channel_code(&e, &params, &[vec![2], vec![3]], 2).unwrap();
        let code = CqswCode::from_codes(&e, vec![c1.clone(), c2.clone()], true, &caps()).unwrap();
        assert_eq!(code.m(), 2);
        assert!(!code.has_reserved_index());
        assert_abs_diff_eq!(code.rate(), 1.0, epsilon = 1e-15);

        // default keeps the reserved index: M - 1 = 2 codes, M = 3
        let kept = CqswCode::from_codes(&e, vec![c1, c2], false, &caps()).unwrap();
        assert_eq!(kept.m(), 3);
        assert_abs_diff_eq!(kept.rate(), (3.0f64).log2(), epsilon = 1e-15);
    }

    #[test]
    fn exact_metrics_zero_error_cover() {
        let e = orthogonal_pair_ensemble();
        let params = CodeParams::new(0.01, 0.5);
        let (code, _) = greedy_cover(&e, 3, &params, 7).unwrap();
        let m = exact_code_metrics(&code, &e, &caps()).unwrap();
        assert_abs_diff_eq!(m.p_e, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.delta, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn code_roundtrips_through_serde() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 21).unwrap();
        let json = serde_json::to_string(&code).unwrap();
        let back: CqswCode = serde_json::from_str(&json).unwrap();
        assert_eq!(back.m(), code.m());
        assert_eq!(back.n(), code.n());
        for (a, b) in code.codes().iter().zip(back.codes()) {
            assert_eq!(a.codewords(), b.codewords());
            assert_eq!(a.per_codeword_error(), b.per_codeword_error());
        }
        back.codes()[0].verify_errors(&e).unwrap();
    }
}
