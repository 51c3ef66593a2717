//! Dense complex Hermitian linear algebra on small Hilbert spaces.
//!
//! Everything downstream (ensembles, typical subspaces, decoders) reduces to
//! the four types here: [`ComplexMatrix`], [`DensityOperator`], [`Povm`] and
//! [`HermitianSpectrum`]. Matrices are dense row-major `Complex<f64>`; all
//! values are immutable after construction and every operation is a pure
//! function, so they can be shared freely across threads.
//!
//! Validation tolerances are fixed absolute bounds chosen for dimensions up to
//! a few thousand in double precision: Hermiticity, positivity and unit trace
//! at `1e-10`, POVM completeness at `1e-8`.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

pub const TOL_HERMITIAN: f64 = 1e-10;
pub const TOL_PSD: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-10;
pub const TOL_COMPLETENESS: f64 = 1e-8;
/// Eigenvalues at or below this are treated as zero by pseudo-inverse maps.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-12;

const LN_2: f64 = std::f64::consts::LN_2;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Row-major entries; length must equal `rows * cols`.
    pub fn from_entries(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// `|v><v|`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn conjugate(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::ZERO {
                    continue;
                }
                let lhs = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(lhs) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max_ij |M_ij - conj(M_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// `(M + M^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// `Re Tr(self * other)`, computed without forming the product.
    pub fn trace_product_re(&self, other: &Self) -> f64 {
        assert_eq!((self.cols, self.rows), (other.rows, other.cols));
        let mut acc = 0.0;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let p = self[(i, k)] * other[(k, i)];
                acc += p.re;
            }
        }
        acc
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Complex entries serialize as [re, im] pairs, row-major.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("ComplexMatrix", 3)?;
        s.serialize_field("rows", &self.rows)?;
        s.serialize_field("cols", &self.cols)?;
        let pairs: Vec<[f64; 2]> = self.data.iter().map(|z| [z.re, z.im]).collect();
        s.serialize_field("entries", &pairs)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            rows: usize,
            cols: usize,
            entries: Vec<[f64; 2]>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let data: Vec<C64> = raw.entries.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_entries(raw.rows, raw.cols, data).map_err(D::Error::custom)
    }
}

/// Kronecker product with index convention `(i*dim_b + k, j*dim_b + l)`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let av = a[(i, j)];
            if av == C64::ZERO {
                continue;
            }
            for k in 0..b.rows() {
                for l in 0..b.cols() {
                    out[(i * b.rows() + k, j * b.cols() + l)] = av * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of state vectors.
pub fn tensor_product_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

/// Marginal of `m` on the factors listed in `keep`; the trace is preserved.
///
/// `dims` are the tensor-factor dimensions in order; their product must equal
/// the matrix dimension.
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::DimMismatch(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    let total: usize = dims.iter().product();
    if total != m.rows() {
        return Err(Error::DimMismatch(format!(
            "factor dims {dims:?} give {total}, matrix has dimension {}",
            m.rows()
        )));
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimMismatch(format!(
            "kept factor out of range for {} factors",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();

    // stride of factor f in the flattened index
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }

    let out_dim: usize = keep.iter().map(|&f| dims[f]).product();
    let traced_total: usize = traced.iter().map(|&f| dims[f]).product();
    let mut out = ComplexMatrix::zeros(out_dim.max(1), out_dim.max(1));

    let decompose = |mut idx: usize, factors: &[usize]| -> usize {
        // flattened index over `factors` digits -> full-space offset
        let mut offset = 0;
        for &f in factors.iter().rev() {
            offset += (idx % dims[f]) * strides[f];
            idx /= dims[f];
        }
        offset
    };

    for r in 0..out_dim.max(1) {
        let r_off = decompose(r, &keep);
        for c in 0..out_dim.max(1) {
            let c_off = decompose(c, &keep);
            let mut acc = C64::ZERO;
            for t in 0..traced_total.max(1) {
                let t_off = decompose(t, &traced);
                acc += m[(r_off + t_off, c_off + t_off)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Full spectrum of a Hermitian matrix: eigenvalues descending, orthonormal
/// eigenvector columns.
///
/// Inside a degenerate block the basis is canonical: projections of the
/// standard basis vectors, Gram-Schmidt in index order, smallest pivot first.
/// This keeps spectra (and the typical-subspace projectors built from them)
/// identical across runs regardless of backend eigenvector choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HermitianSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `dim x dim` matrix whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        (0..self.eigenvectors.rows()).map(|i| self.eigenvectors[(i, k)]).collect()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(diag) V^dagger`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let d = self.dim();
        let v = &self.eigenvectors;
        let mut out = ComplexMatrix::zeros(d, d);
        for k in 0..d {
            let fk = f(self.eigenvalues[k]);
            if fk == 0.0 {
                continue;
            }
            for i in 0..d {
                let vik = v[(i, k)] * fk;
                for j in 0..d {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_fn(|x| x)
    }
}

/// Eigendecomposition of a Hermitian matrix (validated to `1e-10`).
///
/// The QR-based backend occasionally returns NaN on exactly degenerate
/// inputs (for instance rank-one tensor powers); those fall back to a cyclic
/// Jacobi sweep, which converges unconditionally on Hermitian matrices.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianSpectrum> {
    if !m.is_square() {
        return Err(Error::DimMismatch(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    let dev = m.hermitian_deviation();
    if dev > TOL_HERMITIAN {
        return Err(Error::NotHermitian(dev));
    }
    let d = m.rows();
    let h = m.hermitian_part();
    let na = DMatrix::from_fn(d, d, |i, j| h[(i, j)]);
    let eig = na.symmetric_eigen();

    let finite = eig.eigenvalues.iter().all(|l| l.is_finite())
        && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let (raw_values, raw_vectors) = if finite {
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vectors = ComplexMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, j)]);
        (values, vectors)
    } else {
        jacobi_hermitian(&h)
    };

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| raw_values[b].total_cmp(&raw_values[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| raw_values[k]).collect();
    let raw = ComplexMatrix::from_fn(d, d, |i, j| raw_vectors[(i, order[j])]);

    let eigenvectors = canonicalize_degenerate_blocks(&eigenvalues, &raw);
    Ok(HermitianSpectrum { eigenvalues, eigenvectors })
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix: repeated 2x2 unitary
/// rotations in a fixed pivot order until the off-diagonal mass is gone.
fn jacobi_hermitian(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let d = h.rows();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(d);
    let scale = h.max_norm().max(1e-300);

    for _sweep in 0..64 {
        let mut off: f64 = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let beta = a[(p, q)];
                let b = beta.norm();
                if b <= 1e-15 * scale {
                    continue;
                }
                let phase = beta / b; // e^{i phi}
                let alpha = a[(p, p)].re;
                let gamma = a[(q, q)].re;
                let tau = (gamma - alpha) / (2.0 * b);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // unitary: col_p = (c, s e^{-i phi}), col_q = (-s, c e^{-i phi})
                let se = phase.conj() * s;
                let ce = phase.conj() * c;

                // A <- A U
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c + akq * se;
                    a[(k, q)] = akp * (-s) + akq * ce;
                }
                // A <- U^dagger A
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c + aqk * se.conj();
                    a[(q, k)] = apk * (-s) + aqk * ce.conj();
                }
                a[(p, q)] = C64::ZERO;
                a[(q, p)] = C64::ZERO;
                // V <- V U
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * se;
                    v[(k, q)] = vkp * (-s) + vkq * ce;
                }
            }
        }
    }
    let values = (0..d).map(|i| a[(i, i)].re).collect();
    (values, v)
}

/// Replace the eigenvector basis inside each (near-)degenerate block by the
/// deterministic canonical one. Grouping distinct eigenvalues closer than the
/// block tolerance is harmless: the combined eigenspace is reproduced and the
/// reconstruction error stays below the block spread.
fn canonicalize_degenerate_blocks(eigenvalues: &[f64], raw: &ComplexMatrix) -> ComplexMatrix {
    let d = eigenvalues.len();
    let max_abs = eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let block_tol = 1e-10 * max_abs.max(1.0);

    let mut out = ComplexMatrix::zeros(d, d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (eigenvalues[end - 1] - eigenvalues[end]).abs() <= block_tol {
            end += 1;
        }
        let cols: Vec<usize> = (start..end).collect();
        let basis = canonical_block_basis(raw, &cols);
        for (b, col) in basis.iter().zip(start..end) {
            for i in 0..d {
                out[(i, col)] = b[i];
            }
        }
        start = end;
    }
    out
}

fn canonical_block_basis(raw: &ComplexMatrix, cols: &[usize]) -> Vec<Vec<C64>> {
    let d = raw.rows();
    let m = cols.len();
    let mut accepted: Vec<Vec<C64>> = Vec::with_capacity(m);
    for pivot in 0..d {
        if accepted.len() == m {
            break;
        }
        // project e_pivot onto the block eigenspace: sum_w w <w|e_pivot>
        let mut u = vec![C64::ZERO; d];
        for &c in cols {
            let coeff = raw[(pivot, c)].conj();
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += raw[(i, c)] * coeff;
            }
        }
        // orthogonalize twice against the accepted vectors
        for _ in 0..2 {
            for b in &accepted {
                let overlap: C64 = b.iter().zip(&u).map(|(bi, ui)| bi.conj() * ui).sum();
                for (ui, bi) in u.iter_mut().zip(b) {
                    *ui -= overlap * bi;
                }
            }
        }
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-7 {
            for z in &mut u {
                *z /= norm;
            }
            accepted.push(u);
        }
    }
    // The canonical scan spans the block whenever the backend basis does; the
    // fallback keeps the backend vectors if it somehow did not.
    let mut k = 0;
    while accepted.len() < m && k < m {
        let mut u: Vec<C64> = (0..d).map(|i| raw[(i, cols[k])]).collect();
        for b in &accepted {
            let overlap: C64 = b.iter().zip(&u).map(|(bi, ui)| bi.conj() * ui).sum();
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= overlap * bi;
            }
        }
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-7 {
            for z in &mut u {
                *z /= norm;
            }
            accepted.push(u);
        }
        k += 1;
    }
    accepted
}

/// Apply a real scalar function to a PSD matrix in its eigenbasis.
///
/// Eigenvalues in `[-1e-10, 0)` are clamped to zero; anything lower is a
/// validation error.
pub fn psd_function(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
    let spec = eig_hermitian(m)?;
    let min = spec.eigenvalues.last().copied().unwrap_or(0.0);
    if min < -TOL_PSD {
        return Err(Error::NotPsd(min));
    }
    Ok(spec.apply_fn(|x| f(x.max(0.0))))
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    psd_function(m, f64::sqrt)
}

/// Pseudo-inverse square root: eigenvalues at or below `1e-12` map to zero.
pub fn psd_inv_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    psd_function(m, |x| if x <= PSEUDO_INVERSE_CUTOFF { 0.0 } else { 1.0 / x.sqrt() })
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    let spec = eig_hermitian(m)?;
    Ok(spec.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// A positive unit-trace Hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOperator {
    dim: usize,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity and unit trace at the module
    /// tolerances.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimMismatch(format!(
                "{}x{} matrix is not square",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let dev = matrix.hermitian_deviation();
        if dev > TOL_HERMITIAN {
            return Err(Error::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TOL_TRACE || tr.im.abs() > TOL_TRACE {
            return Err(Error::NonUnitTrace(tr.re));
        }
        let spec = eig_hermitian(&matrix)?;
        let min = spec.eigenvalues().last().copied().unwrap_or(0.0);
        if min < -TOL_PSD {
            return Err(Error::NotPsd(min));
        }
        Ok(Self { dim: matrix.rows(), matrix })
    }

    /// For operators that are valid by construction (tensor products of valid
    /// states, spectral reassemblies). Debug builds still check the cheap
    /// invariants.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        debug_assert!(matrix.is_square());
        debug_assert!(matrix.hermitian_deviation() <= 1e-8);
        debug_assert!((matrix.trace().re - 1.0).abs() <= 1e-8);
        Self { dim: matrix.rows(), matrix }
    }

    /// `|psi><psi|` from a normalized state vector.
    pub fn from_pure(state: &[C64]) -> Result<Self> {
        let norm_sqr: f64 = state.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-8 {
            return Err(Error::NonUnitTrace(norm_sqr));
        }
        Ok(Self { dim: state.len(), matrix: ComplexMatrix::outer(state) })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { dim, matrix: ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> Result<HermitianSpectrum> {
        eig_hermitian(&self.matrix)
    }

    /// Product state `self (x) other`.
    pub fn tensor(&self, other: &Self) -> Self {
        Self::new_unchecked(tensor_product(&self.matrix, &other.matrix))
    }
}

/// `||rho - sigma||_1`, the sum of absolute eigenvalues of the difference;
/// lies in `[0, 2]` for density operators.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimMismatch(format!(
            "density operators of dimension {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    trace_norm(&rho.matrix().sub(sigma.matrix()))
}

/// Entropy in bits of a probability-like spectrum; `0 log 0 = 0`.
pub(crate) fn entropy_of_spectrum(eigenvalues: &[f64]) -> f64 {
    let h = -eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.ln() / LN_2)
        .sum::<f64>();
    h.max(0.0)
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let spec = rho.spectrum()?;
    Ok(entropy_of_spectrum(spec.eigenvalues()))
}

/// A positive operator-valued measure: PSD elements resolving the identity.
#[derive(Debug, Clone, Serialize)]
pub struct Povm {
    elements: Vec<ComplexMatrix>,
    labels: Vec<String>,
}

// Deserialization routes through `Povm::new` so loaded files are re-validated.
impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            elements: Vec<ComplexMatrix>,
            labels: Vec<String>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Povm::new(raw.elements, raw.labels).map_err(D::Error::custom)
    }
}

impl Povm {
    /// Validates each element (Hermitian, PSD at `1e-10`) and completeness
    /// (`||sum - 1||_max <= 1e-8`).
    pub fn new(elements: Vec<ComplexMatrix>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParameter("POVM needs at least one element".into()));
        }
        if labels.len() != elements.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} POVM elements",
                labels.len(),
                elements.len()
            )));
        }
        let dim = elements[0].rows();
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for (index, el) in elements.iter().enumerate() {
            let check = || -> Result<()> {
                if !el.is_square() || el.rows() != dim {
                    return Err(Error::DimMismatch(format!(
                        "element is {}x{}, expected {dim}x{dim}",
                        el.rows(),
                        el.cols()
                    )));
                }
                let dev = el.hermitian_deviation();
                if dev > TOL_HERMITIAN {
                    return Err(Error::NotHermitian(dev));
                }
                let spec = eig_hermitian(el)?;
                let min = spec.eigenvalues().last().copied().unwrap_or(0.0);
                if min < -TOL_PSD {
                    return Err(Error::NotPsd(min));
                }
                Ok(())
            };
            check().map_err(|source| Error::PovmElement { index, source: Box::new(source) })?;
            sum.add_assign(el);
        }
        for i in 0..dim {
            sum[(i, i)] -= C64::ONE;
        }
        let dev = sum.max_norm();
        if dev > TOL_COMPLETENESS {
            return Err(Error::PovmIncomplete(dev));
        }
        Ok(Self { elements, labels })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].rows()
    }

    pub fn element(&self, i: usize) -> &ComplexMatrix {
        &self.elements[i]
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Outcome probabilities `Tr(rho Lambda_j)` on a state.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        if rho.dim() != self.dim() {
            return Err(Error::DimMismatch(format!(
                "state dimension {} vs POVM dimension {}",
                rho.dim(),
                self.dim()
            )));
        }
        Ok(self
            .elements
            .iter()
            .map(|el| rho.matrix().trace_product_re(el).clamp(0.0, 1.0))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn ket_plus() -> Vec<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![c(s, 0.0), c(s, 0.0)]
    }

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_entries(2, 2, vec![C64::ZERO, C64::ONE, C64::ONE, C64::ZERO]).unwrap()
    }

    #[test]
    fn tensor_identity_and_basis_projectors() {
        let i2 = ComplexMatrix::identity(2);
        let i4 = tensor_product(&i2, &i2);
        assert_eq!(i4, ComplexMatrix::identity(4));

        let p0 = ComplexMatrix::diagonal(&[1.0, 0.0]);
        let p1 = ComplexMatrix::diagonal(&[0.0, 1.0]);
        assert_eq!(tensor_product(&p0, &p1), ComplexMatrix::diagonal(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn tensor_on_amplitudes_flips_both_qubits() {
        // (X (x) X) |00> = |11>, checked against the 4x4 product done by hand
        let xx = tensor_product(&pauli_x(), &pauli_x());
        let e00 = vec![C64::ONE, C64::ZERO, C64::ZERO, C64::ZERO];
        let out = xx.apply(&e00);
        assert_eq!(out, vec![C64::ZERO, C64::ZERO, C64::ZERO, C64::ONE]);
    }

    #[test]
    fn tensor_trace_multiplicative() {
        let a = ComplexMatrix::from_fn(3, 3, |i, j| c((i + 2 * j) as f64, (i as f64) - 1.0));
        let b = ComplexMatrix::from_fn(2, 2, |i, j| c(0.3 * i as f64, 0.7 * j as f64));
        let lhs = tensor_product(&a, &b).trace();
        let rhs = a.trace() * b.trace();
        assert!((lhs - rhs).norm() <= 1e-10);
    }

    #[test]
    fn partial_trace_of_product_state_factorizes() {
        let rho = DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap();
        let sigma = DensityOperator::from_pure(&ket_plus()).unwrap();
        let joint = tensor_product(rho.matrix(), sigma.matrix());
        let left = partial_trace(&joint, &[2, 2], &[0]).unwrap();
        let right = partial_trace(&joint, &[2, 2], &[1]).unwrap();
        assert!(left.sub(rho.matrix()).max_norm() <= 1e-10);
        assert!(right.sub(sigma.matrix()).max_norm() <= 1e-10);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = vec![c(s, 0.0), C64::ZERO, C64::ZERO, c(s, 0.0)];
        let rho = ComplexMatrix::outer(&bell);
        for keep in [0usize, 1] {
            let marginal = partial_trace(&rho, &[2, 2], &[keep]).unwrap();
            assert!(marginal.sub(&ComplexMatrix::identity(2).scale_re(0.5)).max_norm() <= 1e-10);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let m = ComplexMatrix::identity(6);
        assert!(matches!(partial_trace(&m, &[2, 2], &[0]), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn eig_flat_qubit() {
        let spec = eig_hermitian(&ComplexMatrix::identity(2).scale_re(0.5)).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues()[1], 0.5, epsilon = 1e-12);
        // canonical degenerate basis: the standard basis itself
        assert!(spec.eigenvectors().sub(&ComplexMatrix::identity(2)).max_norm() <= 1e-12);
    }

    #[test]
    fn eig_zero_plus_average() {
        // (|0><0| + |+><+|)/2 has eigenvalues cos^2(pi/8), sin^2(pi/8)
        let avg = ComplexMatrix::outer(&[C64::ONE, C64::ZERO])
            .add(&ComplexMatrix::outer(&ket_plus()))
            .scale_re(0.5);
        let spec = eig_hermitian(&avg).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], 0.8535533905932737, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues()[1], 0.14644660940672624, epsilon = 1e-12);
    }

    #[test]
    fn eig_pauli_z() {
        let z = ComplexMatrix::diagonal(&[1.0, -1.0]);
        let spec = eig_hermitian(&z).unwrap();
        assert_eq!(spec.eigenvalues(), &[1.0, -1.0]);
        assert!((spec.eigenvector(0)[0].norm() - 1.0).abs() <= 1e-12);
        assert!((spec.eigenvector(1)[1].norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_entries(2, 2, vec![C64::ONE, C64::ONE, C64::ZERO, C64::ONE])
            .unwrap();
        assert!(matches!(eig_hermitian(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        // fixed pseudo-random Hermitian 8x8
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = ComplexMatrix::from_fn(8, 8, |_, _| c(next(), next()));
        let h = a.hermitian_part();
        let spec = eig_hermitian(&h).unwrap();
        assert!(spec.reconstruct().sub(&h).max_norm() <= 1e-8);
        // orthonormality
        let vtv = spec.eigenvectors().dagger().matmul(spec.eigenvectors());
        assert!(vtv.sub(&ComplexMatrix::identity(8)).max_norm() <= 1e-8);
    }

    #[test]
    fn psd_function_examples() {
        let m = ComplexMatrix::diagonal(&[4.0, 9.0]);
        assert!(psd_sqrt(&m).unwrap().sub(&ComplexMatrix::diagonal(&[2.0, 3.0])).max_norm() <= 1e-10);

        let half = ComplexMatrix::identity(2).scale_re(0.5);
        let expect = ComplexMatrix::identity(2).scale_re(std::f64::consts::FRAC_1_SQRT_2);
        assert!(psd_sqrt(&half).unwrap().sub(&expect).max_norm() <= 1e-12);

        let m = ComplexMatrix::diagonal(&[4.0, 0.0]);
        let inv = psd_inv_sqrt(&m).unwrap();
        assert!(inv.sub(&ComplexMatrix::diagonal(&[0.5, 0.0])).max_norm() <= 1e-12);

        let neg = ComplexMatrix::diagonal(&[1.0, -0.5]);
        assert!(matches!(psd_sqrt(&neg), Err(Error::NotPsd(_))));
    }

    #[test]
    fn trace_distance_examples() {
        let zero = DensityOperator::from_pure(&[C64::ONE, C64::ZERO]).unwrap();
        let one = DensityOperator::from_pure(&[C64::ZERO, C64::ONE]).unwrap();
        let plus = DensityOperator::from_pure(&ket_plus()).unwrap();
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 2.0, epsilon = 1e-12);
        // eigenvalues of the difference are +-1/sqrt(2)
        assert_abs_diff_eq!(
            trace_distance(&zero, &plus).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn von_neumann_entropy_examples() {
        let pure = DensityOperator::from_pure(&ket_plus()).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&pure).unwrap(), 0.0, epsilon = 1e-10);
        let mixed = DensityOperator::maximally_mixed(2);
        assert_abs_diff_eq!(von_neumann_entropy(&mixed).unwrap(), 1.0, epsilon = 1e-12);
        // binary entropy of the zero-plus average spectrum
        let m = DensityOperator::new(ComplexMatrix::diagonal(&[0.85355, 0.14645])).unwrap();
        assert_abs_diff_eq!(
            von_neumann_entropy(&m).unwrap(),
            0.6008846592666688,
            epsilon = 1e-10
        );
    }

    #[test]
    fn density_operator_validation() {
        let not_unit = ComplexMatrix::diagonal(&[0.5, 0.4]);
        assert!(matches!(DensityOperator::new(not_unit), Err(Error::NonUnitTrace(_))));
        let not_psd = ComplexMatrix::diagonal(&[1.5, -0.5]);
        assert!(matches!(DensityOperator::new(not_psd), Err(Error::NotPsd(_))));
        let ok = ComplexMatrix::diagonal(&[0.25, 0.75]);
        assert!(DensityOperator::new(ok).is_ok());
    }

    #[test]
    fn povm_validation() {
        let p0 = ComplexMatrix::diagonal(&[1.0, 0.0]);
        let p1 = ComplexMatrix::diagonal(&[0.0, 1.0]);
        let povm = Povm::new(vec![p0.clone(), p1], vec!["0".into(), "1".into()]).unwrap();
        assert_eq!(povm.len(), 2);

        let incomplete = Povm::new(vec![p0], vec!["0".into()]);
        assert!(matches!(incomplete, Err(Error::PovmIncomplete(_))));
    }

    #[test]
    fn eig_rank_one_tensor_power() {
        // 64x64 projector onto |++++++>: the QR backend NaNs here and the
        // Jacobi fallback must take over
        let plus = ComplexMatrix::outer(&ket_plus());
        let mut m = plus.clone();
        for _ in 1..6 {
            m = tensor_product(&m, &plus);
        }
        let spec = eig_hermitian(&m).unwrap();
        assert!(spec.eigenvalues().iter().all(|l| l.is_finite()));
        assert_abs_diff_eq!(spec.eigenvalues()[0], 1.0, epsilon = 1e-10);
        assert!(spec.eigenvalues()[1].abs() <= 1e-10);
        assert!(spec.reconstruct().sub(&m).max_norm() <= 1e-8);
        let v = spec.eigenvectors();
        assert!(v.dagger().matmul(v).sub(&ComplexMatrix::identity(64)).max_norm() <= 1e-8);
    }

    #[test]
    fn jacobi_agrees_with_backend() {
        let mut seed = 0x193a6754a8a7d469u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = ComplexMatrix::from_fn(7, 7, |_, _| c(next(), next()));
        let h = a.hermitian_part();
        let (values, vectors) = jacobi_hermitian(&h);
        let spec_backend = eig_hermitian(&h).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        for (a, b) in sorted.iter().zip(spec_backend.eigenvalues()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        // V diag(values) V^dagger reconstructs
        let mut recon = ComplexMatrix::zeros(7, 7);
        for k in 0..7 {
            let col: Vec<C64> = (0..7).map(|i| vectors[(i, k)]).collect();
            recon.add_assign(&ComplexMatrix::outer(&col).scale_re(values[k]));
        }
        assert!(recon.sub(&h).max_norm() <= 1e-9);
    }

    #[test]
    fn matrix_serde_roundtrip_is_exact() {
        let m = ComplexMatrix::from_fn(3, 2, |i, j| c(1.0 / (i + 1) as f64, -(j as f64) / 3.0));
        let json = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
