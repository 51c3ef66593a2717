//! End-to-end protocol execution, disturbance accounting, the converse
//! inequality ledger, the gentle-measurement check, and the two one-shot BB84
//! demonstrations.
//!
//! The measurement instrument is the square-root (Lueders) one: outcome `j`
//! maps `rho` to `sqrt(Lambda_j) rho sqrt(Lambda_j)`. Disturbance is measured
//! against the outcome-averaged residual `sum_j sqrt(Lambda_j) rho
//! sqrt(Lambda_j)`, which is deterministic per source sequence, so Monte Carlo
//! averages only over sequences. Every trial draws from its own counter-based
//! substream of the master seed; together with index-ordered merging this
//! makes results identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cq::{
    basis_povm, bb84_ensemble, bb84_povm, binary_entropy, cqsw_rate, holevo_information,
    induced_ensemble, sequence_state, shannon_entropy, CqEnsemble,
};
use crate::coding::{exact_code_metrics, CodeParams, CqswCode, Sequence};
use crate::linalg::{
    psd_sqrt, trace_norm, ComplexMatrix, DensityOperator,
};
use crate::{par, Caps, Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// `sum_j sqrt(Lambda_j) rho sqrt(Lambda_j)` given the precomputed square
/// roots; trace-preserving for a complete POVM.
pub(crate) fn averaged_residual(rho: &ComplexMatrix, sqrt_elements: &[ComplexMatrix]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for s in sqrt_elements {
        out.add_assign(&s.matmul(rho).matmul(s));
    }
    out.hermitian_part()
}

/// Result of applying one POVM element to a state.
#[derive(Debug, Clone)]
pub struct PostMeasurement {
    pub prob: f64,
    /// `sqrt(Lambda) rho sqrt(Lambda) / prob`; absent when the outcome
    /// probability is at or below `1e-12`.
    pub state: Option<DensityOperator>,
}

/// Square-root Kraus update for a single POVM element (`0 <= Lambda <= 1`
/// within tolerance).
pub fn post_measurement_state(
    rho: &DensityOperator,
    element: &ComplexMatrix,
) -> Result<PostMeasurement> {
    if !element.is_square() || element.rows() != rho.dim() {
        return Err(Error::DimMismatch(format!(
            "element is {}x{}, state has dimension {}",
            element.rows(),
            element.cols(),
            rho.dim()
        )));
    }
    let spec = crate::linalg::eig_hermitian(element)?;
    let min = spec.eigenvalues().last().copied().unwrap_or(0.0);
    if min < -crate::linalg::TOL_PSD {
        return Err(Error::NotPsd(min));
    }
    let max = spec.eigenvalues().first().copied().unwrap_or(0.0);
    if max > 1.0 + 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "POVM element has eigenvalue {max} above 1"
        )));
    }
    let prob = rho.matrix().trace_product_re(element);
    if prob <= 1e-12 {
        return Ok(PostMeasurement { prob: prob.max(0.0), state: None });
    }
    let sqrt = spec.apply_fn(|l| l.max(0.0).sqrt());
    let post = sqrt.matmul(rho.matrix()).matmul(&sqrt).scale_re(1.0 / prob).hermitian_part();
    Ok(PostMeasurement { prob, state: Some(DensityOperator::new(post)?) })
}

/// One protocol trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub xn: Sequence,
    /// Encoder output `i = f(x^n)`.
    pub encoded_index: usize,
    /// Measurement outcome `j`, absent when the encoder emitted the reserved
    /// index and no measurement was performed.
    pub outcome: Option<usize>,
    /// `g(i, j)`: the decoded sequence, absent on the failure outcome or the
    /// reserved index.
    pub decoded: Option<Sequence>,
    pub correct: bool,
    /// Trace distance between the outcome-averaged residual and the input
    /// state for this trial's sequence.
    pub disturbance: f64,
}

/// Monte Carlo estimates with standard errors.
#[derive(Debug, Clone)]
pub struct TrialStats {
    pub trials: usize,
    pub p_e_hat: f64,
    pub p_e_se: f64,
    pub delta_hat: f64,
    pub delta_se: f64,
    pub records: Vec<TrialRecord>,
}

struct CodewordSampler {
    /// Cumulative Born distribution over the decoder outcomes.
    outcome_cdf: Vec<f64>,
    disturbance: f64,
}

/// Sample i.i.d. sequences, run the protocol, and estimate `P_e` and `Delta`.
///
/// Trial `t` draws from stream `t` of a ChaCha generator seeded with `seed`,
/// so estimates and records do not depend on execution order.
pub fn run_trials(code: &CqswCode, e: &CqEnsemble, trials: usize, seed: u64) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }

    // Born distribution and disturbance per codeword, computed once
    let samplers: Vec<Vec<CodewordSampler>> = {
        let per_code: Vec<Result<Vec<CodewordSampler>>> = par::map_collect(code.codes(), |c| {
            let sqrts: Vec<ComplexMatrix> =
                c.decoder().elements().iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
            c.codewords()
                .iter()
                .map(|w| {
                    let rho = sequence_state(e, w)?.state;
                    let probs = c.decoder().outcome_probabilities(&rho)?;
                    let total: f64 = probs.iter().sum();
                    if (total - 1.0).abs() > 1e-8 {
                        return Err(Error::Internal(format!(
                            "Born probabilities sum to {total}"
                        )));
                    }
                    let mut acc = 0.0;
                    let outcome_cdf = probs
                        .iter()
                        .map(|p| {
                            acc += p;
                            acc
                        })
                        .collect();
                    let residual = averaged_residual(rho.matrix(), &sqrts);
                    let disturbance = trace_norm(&residual.sub(rho.matrix()))?;
                    Ok(CodewordSampler { outcome_cdf, disturbance })
                })
                .collect()
        });
        per_code.into_iter().collect::<Result<Vec<_>>>()?
    };

    let mut letter_cdf = Vec::with_capacity(e.len());
    let mut acc = 0.0;
    for &p in e.probs() {
        acc += p;
        letter_cdf.push(acc);
    }

    let n = code.n();
    let records: Vec<TrialRecord> = par::map_range(trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let xn: Sequence = (0..n).map(|_| sample_cdf(&letter_cdf, rng.random())).collect();
        let i = code.encode(&xn);
        if i > code.codes().len() {
            return TrialRecord {
                xn,
                encoded_index: i,
                outcome: None,
                decoded: None,
                correct: false,
                disturbance: 0.0,
            };
        }
        let channel = &code.codes()[i - 1];
        let pos = channel.position(&xn).expect("encoder map consistent");
        let sampler = &samplers[i - 1][pos];
        let j = sample_cdf(&sampler.outcome_cdf, rng.random());
        let decoded =
            if j < channel.len() { Some(channel.codewords()[j].clone()) } else { None };
        let correct = decoded.as_deref() == Some(xn.as_slice());
        TrialRecord {
            xn,
            encoded_index: i,
            outcome: Some(j),
            decoded,
            correct,
            disturbance: sampler.disturbance,
        }
    });

    let nf = trials as f64;
    let p_e_hat = records.iter().filter(|r| !r.correct).count() as f64 / nf;
    let delta_hat = records.iter().map(|r| r.disturbance).sum::<f64>() / nf;
    let (p_e_se, delta_se) = if trials > 1 {
        let var_p: f64 = records
            .iter()
            .map(|r| {
                let x = if r.correct { 0.0 } else { 1.0 };
                (x - p_e_hat).powi(2)
            })
            .sum::<f64>()
            / (nf - 1.0);
        let var_d: f64 =
            records.iter().map(|r| (r.disturbance - delta_hat).powi(2)).sum::<f64>() / (nf - 1.0);
        ((var_p / nf).sqrt(), (var_d / nf).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(TrialStats { trials, p_e_hat, p_e_se, delta_hat, delta_se, records })
}

fn sample_cdf(cdf: &[f64], r: f64) -> usize {
    cdf.iter().position(|&c| r < c).unwrap_or(cdf.len() - 1)
}

/// `h2(P_e) + P_e log2(|X|^n - 1)`, the Fano bound on `H(X^n | I J)` in bits.
/// The cardinality term is evaluated in log space.
pub fn fano_bound(p_e: f64, n: usize, alphabet_size: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::InvalidParameter(format!("error probability {p_e} outside [0, 1]")));
    }
    if n == 0 || alphabet_size == 0 {
        return Err(Error::InvalidParameter("n and |X| must be positive".into()));
    }
    let log_total = n as f64 * (alphabet_size as f64).log2();
    let log_term = if log_total <= 0.0 {
        0.0 // |X|^n = 1: nothing to specify beyond the estimate
    } else {
        log_total + (-(2f64).powf(-log_total)).ln_1p() / LN_2
    };
    Ok(binary_entropy(p_e)? + p_e * log_term)
}

/// One labelled value of the converse chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainLine {
    pub label: String,
    pub value: f64,
}

/// Numerical evaluation of the converse inequality chain for one code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConverseLedger {
    pub n: usize,
    pub rate: f64,
    pub p_e: f64,
    pub h_x: f64,
    pub chi: f64,
    /// Fano bound on `H(X^n | I J)`.
    pub fano_bound: f64,
    /// Left side `n (R + chi)`.
    pub head: f64,
    /// Right side `n (H(X) - 1/n - P_e log2 |X|)`.
    pub floor: f64,
    /// The intermediate line values, present when exact joint statistics were
    /// computed.
    pub chain: Option<Vec<ChainLine>>,
    pub omitted_reason: Option<String>,
    /// `head >= floor - 1e-8`.
    pub verdict: bool,
}

/// Evaluate both ends of the converse chain; with `exact_terms` and an
/// enumerable alphabet, also the intermediate joint-distribution lines.
pub fn converse_audit(
    code: &CqswCode,
    e: &CqEnsemble,
    p_e: f64,
    exact_terms: bool,
    caps: &Caps,
) -> Result<ConverseLedger> {
    let n = code.n();
    let h_x = shannon_entropy(e.probs())?;
    let chi = holevo_information(e)?;
    let rate = code.rate();
    let head = n as f64 * (rate + chi);
    let fano = fano_bound(p_e, n, e.len())?;
    let floor = n as f64 * h_x - 1.0 - n as f64 * p_e * (e.len() as f64).log2();
    let verdict = head >= floor - 1e-8;

    let (chain, omitted_reason) = if !exact_terms {
        (None, Some("exact joint statistics disabled".to_string()))
    } else {
        match caps.enumeration_power(e.len(), n) {
            Err(_) => (
                None,
                Some(format!(
                    "|X|^n = {}^{} exceeds the enumeration cap {}",
                    e.len(),
                    n,
                    caps.max_enumeration
                )),
            ),
            Ok(_) => (Some(chain_lines(code, e, n, h_x, fano)?), None),
        }
    };

    Ok(ConverseLedger {
        n,
        rate,
        p_e,
        h_x,
        chi,
        fano_bound: fano,
        head,
        floor,
        chain,
        omitted_reason,
        verdict,
    })
}

/// The four displayed line values, from the exact joint law of
/// `(X^n, I, J)`: `I = f(X^n)` and `J` Born-distributed under code `I`'s
/// decoder (a dedicated null outcome stands in when no measurement happens).
fn chain_lines(
    code: &CqswCode,
    e: &CqEnsemble,
    n: usize,
    h_x: f64,
    fano: f64,
) -> Result<Vec<ChainLine>> {
    let outcome_slots = code.codes().iter().map(|c| c.len() + 1).max().unwrap_or(1);
    let j_null = outcome_slots; // index for "no measurement"
    let m = code.m();

    let mut p_i = vec![0.0f64; m];
    let mut p_j = vec![0.0f64; outcome_slots + 1];
    let mut p_ij = vec![0.0f64; m * (outcome_slots + 1)];
    let mut h_xn = 0.0;
    let mut h_j_given_x = 0.0;

    // covered sequences are exactly the codewords
    let mut covered = 0.0;
    for (ci, channel) in code.codes().iter().enumerate() {
        for w in channel.codewords() {
            let p = e.sequence_prob(w)?;
            if p == 0.0 {
                continue;
            }
            covered += p;
            h_xn -= p * p.log2();
            let rho = sequence_state(e, w)?.state;
            let born = channel.decoder().outcome_probabilities(&rho)?;
            p_i[ci] += p;
            let mut h_cond = 0.0;
            for (j, &q) in born.iter().enumerate() {
                if q > 0.0 {
                    h_cond -= q * q.log2();
                    p_j[j] += p * q;
                    p_ij[ci * (outcome_slots + 1) + j] += p * q;
                }
            }
            h_j_given_x += p * h_cond;
        }
    }
    // everything else carries the reserved index and the null outcome
    let residual = (1.0 - covered).max(0.0);
    if residual > 0.0 {
        let reserved_slot = m - 1;
        p_i[reserved_slot] += residual;
        p_j[j_null] += residual;
        p_ij[reserved_slot * (outcome_slots + 1) + j_null] += residual;
        // H(X^n) needs the uncovered sequences too
        let total = (e.len() as u64).pow(n as u32);
        for idx in 0..total {
            let xn = crate::coding::index_to_sequence(idx, n, e.len());
            if code.encode(&xn) == code.m() && code.has_reserved_index() {
                let p = e.sequence_prob(&xn)?;
                if p > 0.0 {
                    h_xn -= p * p.log2();
                }
            }
        }
    }

    let ent = |probs: &[f64]| -> f64 { probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum() };
    let h_i = ent(&p_i);
    let h_j = ent(&p_j);
    let h_ij = ent(&p_ij);
    let i_xj = h_j - h_j_given_x;
    let h_xj = h_xn + h_j_given_x;
    let h_x_given_ij = h_xj - h_ij; // H(I | X^n J) = 0 since I = f(X^n)
    let i_ij = h_i + h_j - h_ij;

    let l2 = h_i + i_xj;
    let l3 = h_xn + i_ij - h_x_given_ij;
    let l4 = n as f64 * h_x - h_x_given_ij;

    Ok(vec![
        ChainLine { label: "H(I) + I(X^n;J)".into(), value: l2 },
        ChainLine {
            label: "H(X^n) + H(I|X^n J) + I(I;J) - H(X^n|I J)".into(),
            value: l3,
        },
        ChainLine { label: "n H(X) - H(X^n|I J)".into(), value: l4 },
        ChainLine { label: "n H(X) - Fano bound".into(), value: n as f64 * h_x - fano },
    ])
}

/// Outcome of a gentle-measurement bound check: `Delta <= sqrt(8 eps) + eps`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GentleCheck {
    pub epsilon: f64,
    pub bound: f64,
    pub delta: f64,
    pub pass: bool,
}

/// Check a measured average disturbance against the gentle-measurement bound
/// at the given success deficit (design or realized).
pub fn gentle_measurement_check(epsilon: f64, delta_measured: f64) -> Result<GentleCheck> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "success deficit {epsilon} outside [0, 1)"
        )));
    }
    let bound = (8.0 * epsilon).sqrt() + epsilon;
    Ok(GentleCheck { epsilon, bound, delta: delta_measured, pass: delta_measured <= bound + 1e-8 })
}

/// Figures of the one-shot BB84 protocol.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bb84OneShot {
    /// `(1/n) log2 M` with the reserved index dropped: exactly 1 bit.
    pub rate: f64,
    pub p_e: f64,
    pub delta: f64,
    pub h_x: f64,
    pub chi: f64,
    pub h_x_given_q: f64,
}

/// Build the BB84 ensemble, the two basis subcodes, and run the 1-bit
/// protocol exactly.
///
/// Sending the basis index costs 1 bit against `H(X) = 2` bits of source
/// entropy; the basis measurement identifies the state without error or
/// disturbance, meeting the asymptotic benchmark `H(X|Q) = 1` exactly at
/// `n = 1`.
pub fn bb84_oneshot() -> Result<Bb84OneShot> {
    let e = bb84_ensemble();
    let caps = Caps::default();
    let params = CodeParams::new(0.01, 0.5);
    let z_code = crate::coding::build_channel_code(&e, &params, &[vec![0], vec![1]], 0)?;
    let x_code = crate::coding::build_channel_code(&e, &params, &[vec![2], vec![3]], 0)?;
    let code = CqswCode::from_codes(&e, vec![z_code, x_code], true, &caps)?;
    let metrics = exact_code_metrics(&code, &e, &caps)?;
    Ok(Bb84OneShot {
        rate: code.rate(),
        p_e: metrics.p_e,
        delta: metrics.delta,
        h_x: shannon_entropy(e.probs())?,
        chi: holevo_information(&e)?,
        h_x_given_q: cqsw_rate(&e)?,
    })
}

/// Comparison of the direct four-outcome BB84 measurement with its simulation
/// by one shared random bit plus one communicated bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSimReport {
    /// Outcome labels in a fixed order.
    pub outcomes: Vec<String>,
    /// Joint outcome distribution of the direct measurement.
    pub direct_probs: Vec<f64>,
    /// Joint distribution of (shared bit, outcome bit), in the same order.
    pub simulated_probs: Vec<f64>,
    pub max_prob_deviation: f64,
    /// Largest entrywise deviation between per-outcome reference states.
    pub max_state_deviation: f64,
    pub direct_communication_bits: f64,
    pub simulated_communication_bits: f64,
    pub shared_randomness_bits: f64,
    /// Deviations within `1e-10`.
    pub identical: bool,
}

/// Simulate the BB84 measurement on the maximally mixed qubit two ways and
/// compare the classical-quantum correlations they induce with the purifying
/// reference.
pub fn bb84_measurement_compression() -> Result<MeasurementSimReport> {
    let rho = DensityOperator::maximally_mixed(2);
    let direct = induced_ensemble(&rho, &bb84_povm())?;
    if direct.len() != 4 {
        return Err(Error::Internal("BB84 measurement lost an outcome".into()));
    }

    // shared bit selects the basis; outcome bit is communicated
    let z = induced_ensemble(&rho, &basis_povm(false))?;
    let x = induced_ensemble(&rho, &basis_povm(true))?;
    let mut simulated_probs = Vec::with_capacity(4);
    let mut sim_states = Vec::with_capacity(4);
    for basis in [&z, &x] {
        for o in 0..basis.len() {
            simulated_probs.push(0.5 * basis.prob(o));
            sim_states.push(basis.state(o).clone());
        }
    }

    let mut max_prob_deviation = 0.0f64;
    let mut max_state_deviation = 0.0f64;
    for k in 0..4 {
        max_prob_deviation = max_prob_deviation.max((direct.prob(k) - simulated_probs[k]).abs());
        max_state_deviation = max_state_deviation
            .max(direct.state(k).matrix().sub(sim_states[k].matrix()).max_norm());
    }
    Ok(MeasurementSimReport {
        outcomes: direct.alphabet().to_vec(),
        direct_probs: (0..4).map(|k| direct.prob(k)).collect(),
        simulated_probs,
        max_prob_deviation,
        max_state_deviation,
        direct_communication_bits: 2.0,
        simulated_communication_bits: 1.0,
        shared_randomness_bits: 1.0,
        identical: max_prob_deviation <= 1e-10 && max_state_deviation <= 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::{orthogonal_pair_ensemble, zero_plus_ensemble};
    use crate::linalg::C64;
    use crate::coding::greedy_cover;
    use approx::assert_abs_diff_eq;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn post_measurement_examples() {
        let rho = DensityOperator::maximally_mixed(2);
        let full = post_measurement_state(&rho, &ComplexMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(full.prob, 1.0, epsilon = 1e-12);
        assert!(full.state.unwrap().matrix().sub(rho.matrix()).max_norm() <= 1e-12);

        // projector containing the support: no disturbance
        let pure = DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap();
        let proj = ComplexMatrix::diagonal(&[1.0, 0.0]);
        let out = post_measurement_state(&pure, &proj).unwrap();
        assert_abs_diff_eq!(out.prob, 1.0, epsilon = 1e-12);
        assert!(out.state.unwrap().matrix().sub(pure.matrix()).max_norm() <= 1e-12);

        // rho = |+><+|, Lambda = |0><0|
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityOperator::from_pure(&[C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
        let out = post_measurement_state(&plus, &proj).unwrap();
        assert_abs_diff_eq!(out.prob, 0.5, epsilon = 1e-12);
        assert!(out.state.unwrap().matrix().sub(&ComplexMatrix::diagonal(&[1.0, 0.0])).max_norm() <= 1e-10);

        // zero-probability outcome is flagged
        let one_proj = ComplexMatrix::diagonal(&[0.0, 1.0]);
        let out = post_measurement_state(&pure, &one_proj).unwrap();
        assert!(out.state.is_none());
    }

    #[test]
    fn trials_zero_error_code() {
        let e = orthogonal_pair_ensemble();
        let params = CodeParams::new(0.01, 0.5);
        let (code, _) = greedy_cover(&e, 3, &params, 7).unwrap();
        let stats = run_trials(&code, &e, 500, 99).unwrap();
        assert_eq!(stats.p_e_hat, 0.0);
        assert!(stats.delta_hat <= 1e-10);
    }

    #[test]
    fn trials_are_seed_deterministic() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 5).unwrap();
        let a = run_trials(&code, &e, 2000, 123).unwrap();
        let b = run_trials(&code, &e, 2000, 123).unwrap();
        assert_eq!(a.p_e_hat, b.p_e_hat);
        assert_eq!(a.delta_hat, b.delta_hat);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.xn, rb.xn);
            assert_eq!(ra.outcome, rb.outcome);
        }
    }

    #[test]
    fn trials_match_exact_metrics() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 5).unwrap();
        let exact = exact_code_metrics(&code, &e, &caps()).unwrap();
        let stats = run_trials(&code, &e, 20_000, 2024).unwrap();
        assert!(
            (stats.p_e_hat - exact.p_e).abs() <= 3.0 * stats.p_e_se.max(1e-6),
            "P_e: {} vs {} (se {})",
            stats.p_e_hat,
            exact.p_e,
            stats.p_e_se
        );
        assert!(
            (stats.delta_hat - exact.delta).abs() <= 3.0 * stats.delta_se.max(1e-6),
            "Delta: {} vs {} (se {})",
            stats.delta_hat,
            exact.delta,
            stats.delta_se
        );
    }

    #[test]
    fn fano_examples() {
        assert_abs_diff_eq!(fano_bound(0.0, 5, 2).unwrap(), 0.0, epsilon = 1e-15);
        // P_e = 1/2, n = 1, |X| = 2: 1 + 0.5 log2(1) = 1
        assert_abs_diff_eq!(fano_bound(0.5, 1, 2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fano_bound(0.01, 10, 4).unwrap(),
            0.2807931221372926,
            epsilon = 1e-12
        );
        assert!(fano_bound(1.4, 1, 2).is_err());
    }

    #[test]
    fn converse_holds_on_constructed_codes() {
        let e = zero_plus_ensemble();
        let params = CodeParams::new(0.2, 0.5);
        let (code, _) = greedy_cover(&e, 4, &params, 13).unwrap();
        let exact = exact_code_metrics(&code, &e, &caps()).unwrap();
        let ledger = converse_audit(&code, &e, exact.p_e, true, &caps()).unwrap();
        assert!(ledger.verdict);
        let chain = ledger.chain.as_ref().unwrap();
        assert_eq!(chain.len(), 4);
        // monotone: head >= L2 = L3 >= L4 >= L5
        assert!(ledger.head >= chain[0].value - 1e-8);
        assert_abs_diff_eq!(chain[0].value, chain[1].value, epsilon = 1e-8);
        assert!(chain[1].value >= chain[2].value - 1e-8);
        assert!(chain[2].value >= chain[3].value - 1e-8);
    }

    #[test]
    fn converse_bb84_numbers() {
        let e = bb84_ensemble();
        let caps = Caps::default();
        let params = CodeParams::new(0.01, 0.5);
        let z = crate::coding::build_channel_code(&e, &params, &[vec![0], vec![1]], 0).unwrap();
        let x = crate::coding::build_channel_code(&e, &params, &[vec![2], vec![3]], 0).unwrap();
        let code = CqswCode::from_codes(&e, vec![z, x], true, &caps).unwrap();
        let ledger = converse_audit(&code, &e, 0.0, true, &caps).unwrap();
        // 1*1 + 1*1 = 2 >= 1*(2 - 1 - 0) = 1
        assert_abs_diff_eq!(ledger.head, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ledger.floor, 1.0, epsilon = 1e-9);
        assert!(ledger.verdict);
    }

    #[test]
    fn gentle_check_examples() {
        let z = gentle_measurement_check(0.0, 0.0).unwrap();
        assert!(z.pass);
        let b = gentle_measurement_check(0.125, 0.0).unwrap();
        assert_abs_diff_eq!(b.bound, 1.125, epsilon = 1e-12);
        let f = gentle_measurement_check(0.01, 1.0).unwrap();
        assert!(!f.pass);
        assert!(gentle_measurement_check(1.5, 0.0).is_err());
    }

    #[test]
    fn bb84_oneshot_is_exact() {
        let r = bb84_oneshot().unwrap();
        assert_abs_diff_eq!(r.rate, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.p_e, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.delta, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.h_x, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.chi, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.h_x_given_q, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn bb84_measurement_simulation_is_exact() {
        let r = bb84_measurement_compression().unwrap();
        assert!(r.identical);
        for p in &r.direct_probs {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.direct_communication_bits, 2.0, epsilon = 0.0);
        assert_abs_diff_eq!(r.simulated_communication_bits, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(r.shared_randomness_bits, 1.0, epsilon = 0.0);
        assert!(r.max_state_deviation <= 1e-10);
    }
}
