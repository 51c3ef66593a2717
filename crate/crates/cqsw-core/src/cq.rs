//! Classical-quantum systems `X Q`: ensembles, entropic rate quantities,
//! measurement-induced ensembles, and n-fold extensions.
//!
//! An ensemble `{rho_x, p(x)}` describes a classical index `X` correlated with
//! a quantum system `Q`. Embedding `X` in an orthonormal basis gives the
//! enlarged-Hilbert-space state `sum_x p(x) |x><x| (x) rho_x`, on which the
//! usual von Neumann quantities become the rate quantities of the compression
//! problem:
//!
//! - `H(X)`: Shannon entropy of the index;
//! - `I(X;Q)`: the Holevo information `chi` of the ensemble;
//! - `H(X|Q) = H(X) - chi`: the optimal compression rate with quantum side
//!   information.
//!
//! All entropies are in bits.

use serde::{Deserialize, Serialize};

use crate::linalg::{
    self, entropy_of_spectrum, tensor_product, ComplexMatrix, DensityOperator,
    Povm, C64,
};
use crate::{Caps, Error, Result};

/// Probability-vector tolerance; vectors further from normalization are
/// rejected rather than silently renormalized.
pub const TOL_PROB: f64 = 1e-10;

/// Outcomes with probability at or below this are dropped by
/// [`induced_ensemble`]: the post-measurement state is undefined there.
pub const OUTCOME_CUTOFF: f64 = 1e-12;

/// A finite alphabet with probabilities and one density operator per symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CqEnsemble {
    alphabet: Vec<String>,
    probs: Vec<f64>,
    states: Vec<DensityOperator>,
}

impl CqEnsemble {
    pub fn new(alphabet: Vec<String>, probs: Vec<f64>, states: Vec<DensityOperator>) -> Result<Self> {
        if alphabet.len() != probs.len() || alphabet.len() != states.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} symbols, {} probabilities, {} states",
                alphabet.len(),
                probs.len(),
                states.len()
            )));
        }
        if alphabet.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        validate_distribution(&probs)?;
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimMismatch("ensemble states have mixed dimensions".into()));
        }
        Ok(Self { alphabet, probs, states })
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    /// Hilbert-space dimension of each state.
    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn symbol(&self, x: usize) -> &str {
        &self.alphabet[x]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.probs[x]
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    pub fn state(&self, x: usize) -> &DensityOperator {
        &self.states[x]
    }

    /// `sum_x p(x) rho_x`.
    pub fn average_state(&self) -> DensityOperator {
        let mut acc = ComplexMatrix::zeros(self.dim(), self.dim());
        for (p, s) in self.probs.iter().zip(&self.states) {
            acc.add_assign(&s.matrix().scale_re(*p));
        }
        DensityOperator::new_unchecked(acc)
    }

    /// `p(x^n)` under the product distribution.
    pub fn sequence_prob(&self, xn: &[usize]) -> Result<f64> {
        let mut p = 1.0;
        for &x in xn {
            if x >= self.len() {
                return Err(Error::SymbolOutOfRange { index: x, alphabet: self.len() });
            }
            p *= self.probs[x];
        }
        Ok(p)
    }

    /// Symbol labels joined in sequence order.
    pub fn sequence_label(&self, xn: &[usize]) -> String {
        xn.iter().map(|&x| self.alphabet[x].as_str()).collect()
    }
}

fn validate_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if let Some(&bad) = probs.iter().find(|&&p| p.is_nan() || p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidDistribution(format!("negative or non-finite entry {bad}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > TOL_PROB {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// `h2(p) = -p log2 p - (1-p) log2(1-p)`, zero at the endpoints.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("binary entropy argument {p} outside [0, 1]")));
    }
    Ok(entropy_of_spectrum(&[p, 1.0 - p]))
}

/// `H(X) = -sum_x p(x) log2 p(x)` for a validated distribution.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    validate_distribution(probs)?;
    Ok(entropy_of_spectrum(probs))
}

/// The enlarged-Hilbert-space state `sum_x p(x) |x><x| (x) rho_x`,
/// block-diagonal on dimension `|X| * d`.
pub fn ehs_state(e: &CqEnsemble) -> DensityOperator {
    let d = e.dim();
    let big = e.len() * d;
    let mut m = ComplexMatrix::zeros(big, big);
    for (x, (p, s)) in e.probs().iter().zip(e.states()).enumerate() {
        for i in 0..d {
            for j in 0..d {
                m[(x * d + i, x * d + j)] = s.matrix()[(i, j)] * C64::new(*p, 0.0);
            }
        }
    }
    DensityOperator::new_unchecked(m)
}

/// Holevo information `chi = H(sum p rho) - sum p H(rho_x)`, in
/// `[0, min(H(X), log2 d)]`; equals the mutual information `I(X;Q)` of the
/// enlarged-Hilbert-space state.
pub fn holevo_information(e: &CqEnsemble) -> Result<f64> {
    let avg = linalg::von_neumann_entropy(&e.average_state())?;
    Ok((avg - conditional_q_entropy(e)?).max(0.0))
}

/// `H(Q|X) = sum_x p(x) H(rho_x)`.
pub fn conditional_q_entropy(e: &CqEnsemble) -> Result<f64> {
    let mut acc = 0.0;
    for (p, s) in e.probs().iter().zip(e.states()) {
        if *p > 0.0 {
            acc += p * linalg::von_neumann_entropy(s)?;
        }
    }
    Ok(acc)
}

/// The compression rate `H(X|Q) = H(X) - chi`; non-negative.
pub fn cqsw_rate(e: &CqEnsemble) -> Result<f64> {
    let h_x = shannon_entropy(e.probs())?;
    Ok((h_x - holevo_information(e)?).max(0.0))
}

/// Ensemble induced by measuring one half of the purification of `rho`.
///
/// Outcome probabilities are `p(x) = Tr(rho Lambda_x)`; the reference states
/// are `rho_x = [sqrt(rho) Lambda_x sqrt(rho)]^* / p(x)`, with the complex
/// conjugation taken in the eigenbasis of `rho` (descending eigenvalues,
/// canonical degenerate blocks). Outcomes with `p(x) <= 1e-12` are dropped.
pub fn induced_ensemble(rho: &DensityOperator, povm: &Povm) -> Result<CqEnsemble> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimMismatch(format!(
            "state dimension {} vs POVM dimension {}",
            rho.dim(),
            povm.dim()
        )));
    }
    let spec = rho.spectrum()?;
    let v = spec.eigenvectors();
    let v_dag = v.dagger();
    let sqrt_rho = spec.apply_fn(|l| l.max(0.0).sqrt());

    let mut alphabet = Vec::new();
    let mut probs = Vec::new();
    let mut states = Vec::new();
    for (i, el) in povm.elements().iter().enumerate() {
        let p = rho.matrix().trace_product_re(el);
        if p <= OUTCOME_CUTOFF {
            continue;
        }
        let sandwiched = sqrt_rho.matmul(el).matmul(&sqrt_rho);
        // conjugate in the eigenbasis: V conj(V^dag M V) V^dag
        let conj_in_basis = v.matmul(&v_dag.matmul(&sandwiched).matmul(v).conjugate()).matmul(&v_dag);
        let state = DensityOperator::new(conj_in_basis.scale_re(1.0 / p).hermitian_part())?;
        alphabet.push(povm.label(i).to_string());
        probs.push(p);
        states.push(state);
    }
    CqEnsemble::new(alphabet, probs, states)
}

/// A sequence `x^n` with its product state and probability weight.
#[derive(Debug, Clone)]
pub struct SequenceState {
    pub sequence: Vec<usize>,
    pub state: DensityOperator,
    pub prob: f64,
}

/// `rho_{x^n} = rho_{x_1} (x) ... (x) rho_{x_n}` with `p(x^n)` alongside.
pub fn sequence_state(e: &CqEnsemble, xn: &[usize]) -> Result<SequenceState> {
    if xn.is_empty() {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    let prob = e.sequence_prob(xn)?;
    let mut m = e.state(xn[0]).matrix().clone();
    for &x in &xn[1..] {
        m = tensor_product(&m, e.state(x).matrix());
    }
    Ok(SequenceState { sequence: xn.to_vec(), state: DensityOperator::new_unchecked(m), prob })
}

/// The n-fold product ensemble on alphabet `X^n`.
pub fn product_ensemble(e: &CqEnsemble, n: usize, caps: &Caps) -> Result<CqEnsemble> {
    let count = caps.enumeration_power(e.len(), n)?;
    caps.dense_power(e.dim(), n)?;
    let mut alphabet = Vec::with_capacity(count as usize);
    let mut probs = Vec::with_capacity(count as usize);
    let mut states = Vec::with_capacity(count as usize);
    let mut xn = vec![0usize; n];
    loop {
        let s = sequence_state(e, &xn)?;
        alphabet.push(e.sequence_label(&xn));
        probs.push(s.prob);
        states.push(s.state);
        if !next_sequence(&mut xn, e.len()) {
            break;
        }
    }
    // Product probabilities sum to 1 only up to accumulated rounding; rescale
    // the last entry so the validated constructor sees an exact distribution.
    let sum: f64 = probs.iter().sum();
    if let Some(last) = probs.last_mut() {
        *last += 1.0 - sum;
    }
    CqEnsemble::new(alphabet, probs, states)
}

/// Advance `xn` lexicographically; false once it wraps around.
pub(crate) fn next_sequence(xn: &mut [usize], alphabet: usize) -> bool {
    for digit in xn.iter_mut().rev() {
        *digit += 1;
        if *digit < alphabet {
            return true;
        }
        *digit = 0;
    }
    false
}

/// Uniform BB84 ensemble over `|0>, |1>, |+>, |->`.
pub fn bb84_ensemble() -> CqEnsemble {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let kets: [Vec<C64>; 4] = [
        vec![C64::ONE, C64::ZERO],
        vec![C64::ZERO, C64::ONE],
        vec![C64::new(s, 0.0), C64::new(s, 0.0)],
        vec![C64::new(s, 0.0), C64::new(-s, 0.0)],
    ];
    CqEnsemble::new(
        vec!["0".into(), "1".into(), "+".into(), "-".into()],
        vec![0.25; 4],
        kets.iter().map(|k| DensityOperator::from_pure(k).expect("unit kets")).collect(),
    )
    .expect("valid ensemble")
}

/// Uniform orthogonal pair `|0>, |1>`.
pub fn orthogonal_pair_ensemble() -> CqEnsemble {
    CqEnsemble::new(
        vec!["0".into(), "1".into()],
        vec![0.5, 0.5],
        vec![
            DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).expect("unit ket"),
            DensityOperator::from_pure(&[C64::ZERO, C64::ONE]).expect("unit ket"),
        ],
    )
    .expect("valid ensemble")
}

/// Uniform non-orthogonal pair `|0>, |+>`.
pub fn zero_plus_ensemble() -> CqEnsemble {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CqEnsemble::new(
        vec!["0".into(), "+".into()],
        vec![0.5, 0.5],
        vec![
            DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).expect("unit ket"),
            DensityOperator::from_pure(&[C64::new(s, 0.0), C64::new(s, 0.0)]).expect("unit ket"),
        ],
    )
    .expect("valid ensemble")
}

/// The four-outcome BB84 measurement `{ |b><b| / 2 }`.
pub fn bb84_povm() -> Povm {
    let e = bb84_ensemble();
    Povm::new(
        e.states().iter().map(|s| s.matrix().scale_re(0.5)).collect(),
        e.alphabet().to_vec(),
    )
    .expect("valid POVM")
}

/// The projective measurement onto basis `{|0>, |1>}` (z) or `{|+>, |->}` (x).
pub fn basis_povm(x_basis: bool) -> Povm {
    let e = bb84_ensemble();
    let (i, j, li, lj) = if x_basis { (2, 3, "+", "-") } else { (0, 1, "0", "1") };
    Povm::new(
        vec![e.state(i).matrix().clone(), e.state(j).matrix().clone()],
        vec![li.into(), lj.into()],
    )
    .expect("valid POVM")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn binary_entropy_examples() {
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(binary_entropy(0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.853553).unwrap(), 0.6008770300123105, epsilon = 1e-12);
        assert!(binary_entropy(1.2).is_err());
    }

    #[test]
    fn shannon_entropy_examples() {
        assert_abs_diff_eq!(shannon_entropy(&[0.25; 4]).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(shannon_entropy(&[0.9, 0.1]).unwrap(), 0.4689955935892812, epsilon = 1e-12);
        assert!(shannon_entropy(&[0.5, 0.4]).is_err());
        assert!(shannon_entropy(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn ehs_state_blocks() {
        let single = CqEnsemble::new(
            vec!["a".into()],
            vec![1.0],
            vec![DensityOperator::maximally_mixed(2)],
        )
        .unwrap();
        let rho = ehs_state(&single);
        assert!(rho.matrix().sub(&ComplexMatrix::identity(2).scale_re(0.5)).max_norm() <= 1e-12);

        let orth = orthogonal_pair_ensemble();
        let rho = ehs_state(&orth);
        let expect = ComplexMatrix::diagonal(&[0.5, 0.0, 0.0, 0.5]);
        assert!(rho.matrix().sub(&expect).max_norm() <= 1e-12);

        // marginal on the classical factor is diag(p)
        let e = bb84_ensemble();
        let rho = ehs_state(&e);
        let marg = linalg::partial_trace(rho.matrix(), &[4, 2], &[0]).unwrap();
        assert!(marg.sub(&ComplexMatrix::diagonal(&[0.25; 4])).max_norm() <= 1e-10);
    }

    #[test]
    fn holevo_examples() {
        assert_abs_diff_eq!(holevo_information(&bb84_ensemble()).unwrap(), 1.0, epsilon = 1e-10);

        let same = CqEnsemble::new(
            vec!["a".into(), "b".into()],
            vec![0.3, 0.7],
            vec![DensityOperator::maximally_mixed(2), DensityOperator::maximally_mixed(2)],
        )
        .unwrap();
        assert_abs_diff_eq!(holevo_information(&same).unwrap(), 0.0, epsilon = 1e-10);

        assert_abs_diff_eq!(
            holevo_information(&zero_plus_ensemble()).unwrap(),
            0.6008760366928562,
            epsilon = 1e-10
        );
    }

    #[test]
    fn rate_examples() {
        assert_abs_diff_eq!(cqsw_rate(&bb84_ensemble()).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cqsw_rate(&orthogonal_pair_ensemble()).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            cqsw_rate(&zero_plus_ensemble()).unwrap(),
            1.0 - 0.6008760366928562,
            epsilon = 1e-10
        );
    }

    #[test]
    fn conditional_entropy_examples() {
        assert_abs_diff_eq!(conditional_q_entropy(&bb84_ensemble()).unwrap(), 0.0, epsilon = 1e-10);
        let mixed = CqEnsemble::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![
                DensityOperator::maximally_mixed(2),
                DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap(),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(conditional_q_entropy(&mixed).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn three_routes_to_the_rate_agree() {
        let e = zero_plus_ensemble();
        let h_x = shannon_entropy(e.probs()).unwrap();
        let rho_aq = ehs_state(&e);
        let h_aq = linalg::von_neumann_entropy(&rho_aq).unwrap();
        let q = linalg::partial_trace(rho_aq.matrix(), &[e.len(), e.dim()], &[1]).unwrap();
        let h_q = linalg::von_neumann_entropy(&DensityOperator::new(q).unwrap()).unwrap();

        let definitional = cqsw_rate(&e).unwrap();
        let ehs_route = h_aq - h_q;
        let mutual_route = h_x - (h_x + h_q - h_aq);
        assert_abs_diff_eq!(definitional, ehs_route, epsilon = 1e-8);
        assert_abs_diff_eq!(definitional, mutual_route, epsilon = 1e-8);
    }

    #[test]
    fn induced_ensemble_commuting_case() {
        let rho = DensityOperator::maximally_mixed(2);
        let e = induced_ensemble(&rho, &basis_povm(false)).unwrap();
        assert_eq!(e.len(), 2);
        assert_abs_diff_eq!(e.prob(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.prob(1), 0.5, epsilon = 1e-12);
        assert!(e.state(0).matrix().sub(&ComplexMatrix::diagonal(&[1.0, 0.0])).max_norm() <= 1e-10);
        assert!(e.state(1).matrix().sub(&ComplexMatrix::diagonal(&[0.0, 1.0])).max_norm() <= 1e-10);
    }

    #[test]
    fn induced_ensemble_bb84_measurement() {
        let rho = DensityOperator::maximally_mixed(2);
        let e = induced_ensemble(&rho, &bb84_povm()).unwrap();
        let expect = bb84_ensemble();
        assert_eq!(e.len(), 4);
        for x in 0..4 {
            assert_abs_diff_eq!(e.prob(x), 0.25, epsilon = 1e-12);
            assert!(e.state(x).matrix().sub(expect.state(x).matrix()).max_norm() <= 1e-10);
        }
    }

    #[test]
    fn induced_ensemble_trivial_povm() {
        let rho = DensityOperator::new(
            ComplexMatrix::diagonal(&[0.7, 0.3]),
        )
        .unwrap();
        let povm = Povm::new(vec![ComplexMatrix::identity(2)], vec!["only".into()]).unwrap();
        let e = induced_ensemble(&rho, &povm).unwrap();
        assert_eq!(e.len(), 1);
        assert_abs_diff_eq!(e.prob(0), 1.0, epsilon = 1e-12);
        // rho is real diagonal here, so the conjugated state is rho itself
        assert!(e.state(0).matrix().sub(rho.matrix()).max_norm() <= 1e-10);
    }

    #[test]
    fn induced_average_matches_input_state() {
        let rho = DensityOperator::new(
            ComplexMatrix::from_entries(
                2,
                2,
                vec![
                    C64::new(0.6, 0.0),
                    C64::new(0.1, 0.2),
                    C64::new(0.1, -0.2),
                    C64::new(0.4, 0.0),
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let e = induced_ensemble(&rho, &bb84_povm()).unwrap();
        // the average recovers rho conjugated in its own eigenbasis, which is rho
        let avg = e.average_state();
        assert!(avg.matrix().sub(rho.matrix()).max_norm() <= 1e-8);
    }

    #[test]
    fn sequence_state_examples() {
        let e = zero_plus_ensemble();
        let s = sequence_state(&e, &[0]).unwrap();
        assert!(s.state.matrix().sub(e.state(0).matrix()).max_norm() <= 1e-12);

        let s = sequence_state(&e, &[0, 0]).unwrap();
        let expect = ComplexMatrix::diagonal(&[1.0, 0.0, 0.0, 0.0]);
        assert!(s.state.matrix().sub(&expect).max_norm() <= 1e-12);

        let s = sequence_state(&e, &[0, 0, 0]).unwrap();
        assert_abs_diff_eq!(s.prob, 0.125, epsilon = 1e-15);

        assert!(matches!(
            sequence_state(&e, &[0, 7]),
            Err(Error::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn product_ensemble_additivity() {
        let e = zero_plus_ensemble();
        let caps = Caps::default();
        for n in [2usize, 3] {
            let en = product_ensemble(&e, n, &caps).unwrap();
            let chi1 = holevo_information(&e).unwrap();
            let chin = holevo_information(&en).unwrap();
            assert_abs_diff_eq!(chin, n as f64 * chi1, epsilon = 1e-6);
            let r1 = cqsw_rate(&e).unwrap();
            let rn = cqsw_rate(&en).unwrap();
            assert_abs_diff_eq!(rn, n as f64 * r1, epsilon = 1e-6);
        }
    }
}
