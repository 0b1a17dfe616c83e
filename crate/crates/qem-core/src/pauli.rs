//! Pauli indexing, Walsh (commutation) transforms, and the PTM types.
//!
//! An `n`-qubit Pauli string is addressed by a base-4 integer: digit `q`
//! (little-endian, so qubit 0 is the least significant digit) selects the
//! factor on qubit `q` with 0 = I, 1 = X, 2 = Y, 3 = Z.
//!
//! States, operations and observables are carried in the Pauli transfer
//! matrix (PTM) picture over that index set:
//!
//! * state: `v[i] = 2^(-n/2) Tr(S_i rho)`, length `4^n`,
//! * operation: `G[i][j] = 2^(-n) Tr(S_i O(S_j))`, a real `4^n x 4^n` matrix,
//! * observable: `o[i] = 2^(-n/2) Tr(S_i M)`, paired as `r = o . v`.

use num_complex::Complex64;

use crate::mat::{CMat, Mat};
use crate::{Error, Result};

/// Hilbert space dimension `2^n`.
#[inline]
pub fn dim2(n: usize) -> usize {
    1usize << n
}

/// Pauli index space dimension `4^n`.
#[inline]
pub fn dim4(n: usize) -> usize {
    1usize << (2 * n)
}

/// `2^(-n/2)`, the PTM coefficient of the identity for any unit-trace state.
#[inline]
pub fn trace_coeff(n: usize) -> f64 {
    (1.0 / dim2(n) as f64).sqrt()
}

#[inline]
pub(crate) fn digit(code: usize, q: usize) -> usize {
    (code >> (2 * q)) & 3
}

/// Product digit table: `sigma_a sigma_b = i^t sigma_{PROD_DIGIT[a][b]}`.
const PROD_DIGIT: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]];

/// Phase exponent table for the same products (`t` in `i^t`).
const PROD_PHASE: [[u8; 4]; 4] = [[0, 0, 0, 0], [0, 0, 1, 3], [0, 3, 0, 1], [0, 1, 3, 0]];

/// Whether two Pauli strings (as raw codes) commute.
#[inline]
pub(crate) fn codes_commute(a: usize, b: usize, n: usize) -> bool {
    let mut anti = 0usize;
    for q in 0..n {
        let (da, db) = (digit(a, q), digit(b, q));
        if da != 0 && db != 0 && da != db {
            anti ^= 1;
        }
    }
    anti == 0
}

/// Raw-code Pauli product: returns `(code of a*b, t)` with `S_a S_b = i^t S_{a*b}`.
pub(crate) fn codes_product(a: usize, b: usize, n: usize) -> (usize, u8) {
    let mut code = 0usize;
    let mut t = 0u8;
    for q in 0..n {
        let (da, db) = (digit(a, q), digit(b, q));
        code |= PROD_DIGIT[da][db] << (2 * q);
        t = (t + PROD_PHASE[da][db]) & 3;
    }
    (code, t)
}

/// A Pauli string on a fixed number of qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliIndex {
    code: usize,
    n: usize,
}

impl PauliIndex {
    pub fn new(code: usize, n: usize) -> Result<Self> {
        if n == 0 || code >= dim4(n) {
            return Err(Error::InvalidPauliIndex { code, qubits: n });
        }
        Ok(PauliIndex { code, n })
    }

    /// Single-qubit factor placed on `qubit`; `axis` is 1 = X, 2 = Y, 3 = Z.
    pub fn single(n: usize, qubit: usize, axis: usize) -> Result<Self> {
        if qubit >= n || axis == 0 || axis > 3 {
            return Err(Error::InvalidPauliIndex { code: axis << (2 * qubit), qubits: n });
        }
        PauliIndex::new(axis << (2 * qubit), n)
    }

    pub fn identity(n: usize) -> Self {
        PauliIndex { code: 0, n }
    }

    pub fn from_digits(digits: &[usize]) -> Result<Self> {
        let n = digits.len();
        let mut code = 0usize;
        for (q, &d) in digits.iter().enumerate() {
            if d > 3 {
                return Err(Error::InvalidPauliIndex { code: d, qubits: n });
            }
            code |= d << (2 * q);
        }
        PauliIndex::new(code, n)
    }

    pub fn code(&self) -> usize {
        self.code
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    /// Base-4 digit for `qubit` (0 = I, 1 = X, 2 = Y, 3 = Z).
    pub fn digit(&self, qubit: usize) -> usize {
        digit(self.code, qubit)
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        (0..self.n).filter(|&q| self.digit(q) != 0).count()
    }

    pub fn commutes_with(&self, other: &PauliIndex) -> bool {
        assert_eq!(self.n, other.n, "Pauli strings must act on the same qubits");
        codes_commute(self.code, other.code, self.n)
    }

    /// Group product: `S_self * S_other = i^t S_result`.
    pub fn product(&self, other: &PauliIndex) -> (PauliIndex, u8) {
        assert_eq!(self.n, other.n, "Pauli strings must act on the same qubits");
        let (code, t) = codes_product(self.code, other.code, self.n);
        (PauliIndex { code, n: self.n }, t)
    }

    /// Text label, qubit 0 leftmost (e.g. code 1 on 2 qubits is "XI").
    pub fn label(&self) -> String {
        (0..self.n).map(|q| ['I', 'X', 'Y', 'Z'][self.digit(q)]).collect()
    }
}

impl std::fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Dense `2^n x 2^n` matrix of a Pauli string.
pub fn pauli_matrix(idx: PauliIndex) -> CMat {
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let single = |d: usize| -> CMat {
        let mut m = CMat::zeros(2);
        match d {
            0 => {
                m.set(0, 0, one);
                m.set(1, 1, one);
            }
            1 => {
                m.set(0, 1, one);
                m.set(1, 0, one);
            }
            2 => {
                m.set(0, 1, -i);
                m.set(1, 0, i);
            }
            _ => {
                m.set(0, 0, one);
                m.set(1, 1, -one);
            }
        }
        m
    };
    let mut out = single(idx.digit(0));
    for q in 1..idx.qubits() {
        out = single(idx.digit(q)).kron(&out);
    }
    out
}

/// X-flip mask of a Pauli code: bit `q` set when the factor on qubit `q` is X or Y.
#[inline]
fn x_mask(code: usize, n: usize) -> usize {
    let mut m = 0usize;
    for q in 0..n {
        let d = digit(code, q);
        if d == 1 || d == 2 {
            m |= 1 << q;
        }
    }
    m
}

/// Sparse row entry of a Pauli matrix: `S[row, col]` with exactly one nonzero
/// per row. Returns `(col, value)`.
fn pauli_row_entry(code: usize, n: usize, row: usize) -> (usize, Complex64) {
    let col = row ^ x_mask(code, n);
    let mut val = Complex64::new(1.0, 0.0);
    for q in 0..n {
        let b = (row >> q) & 1;
        match digit(code, q) {
            2 => {
                // Y[b, 1-b] = -i * (-1)^b
                val *= if b == 0 { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) };
            }
            3 => {
                if b == 1 {
                    val = -val;
                }
            }
            _ => {}
        }
    }
    (col, val)
}

/// `Tr(S_code * m)` using the sparse structure of the Pauli string.
fn pauli_trace_with(code: usize, n: usize, m: &CMat) -> Complex64 {
    let d = dim2(n);
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..d {
        let (c, v) = pauli_row_entry(code, n, r);
        acc += v * m.get(c, r);
    }
    acc
}

/// Walsh sign `K(i, l) = +1` when `S_i` and `S_l` commute, `-1` otherwise.
#[inline]
pub fn walsh_sign(i: usize, l: usize, n: usize) -> f64 {
    if codes_commute(i, l, n) {
        1.0
    } else {
        -1.0
    }
}

/// Column `l` of the Walsh commutation matrix as a `+/-1` vector.
pub fn walsh_column(l: usize, n: usize) -> Vec<f64> {
    (0..dim4(n)).map(|i| walsh_sign(i, l, n)).collect()
}

/// Dense Walsh commutation matrix (entry `(i, j)` is +1 when `S_i` and `S_j`
/// commute, -1 otherwise). Symmetric, and `W * W = 4^n I`. Capped at 5 qubits;
/// use [`walsh_apply`] beyond toy sizes.
pub fn walsh_matrix(n: usize) -> Result<Mat> {
    if n == 0 || n > 5 {
        return Err(Error::WalshTooLarge(n));
    }
    let d = dim4(n);
    let mut m = Mat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m.set(i, j, walsh_sign(i, j, n));
        }
    }
    Ok(m)
}

/// In-place fast Walsh transform: `v <- W v` in `O(n 4^n)` via one radix-4
/// butterfly pass per digit. The single-digit kernel is the 4x4 commutation
/// matrix [[1,1,1,1],[1,1,-1,-1],[1,-1,1,-1],[1,-1,-1,1]].
pub fn walsh_apply(v: &mut [f64], n: usize) {
    assert_eq!(v.len(), dim4(n), "vector length must be 4^n");
    for q in 0..n {
        let s = 1usize << (2 * q);
        let block = s * 4;
        let mut start = 0;
        while start < v.len() {
            for off in start..start + s {
                let x0 = v[off];
                let x1 = v[off + s];
                let x2 = v[off + 2 * s];
                let x3 = v[off + 3 * s];
                v[off] = x0 + x1 + x2 + x3;
                v[off + s] = x0 + x1 - x2 - x3;
                v[off + 2 * s] = x0 - x1 + x2 - x3;
                v[off + 3 * s] = x0 - x1 - x2 + x3;
            }
            start += block;
        }
    }
}

/// PTM state vector: `v[i] = 2^(-n/2) Tr(S_i rho)`.
///
/// Invariants enforced at construction: `coeffs[0]` equals `2^(-n/2)` (unit
/// trace; values within 1e-9 are snapped to the exact constant) and the l2
/// norm is at most 1 (purity), within 1e-9.
#[derive(Clone, Debug, PartialEq)]
pub struct PtmState {
    n: usize,
    coeffs: Vec<f64>,
}

impl PtmState {
    pub fn new(n: usize, mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dim4(n) {
            return Err(Error::DimensionMismatch(format!(
                "state length {} != 4^{}",
                coeffs.len(),
                n
            )));
        }
        let canon = trace_coeff(n);
        if (coeffs[0] - canon).abs() > 1e-9 {
            return Err(Error::BadTraceCoeff(coeffs[0]));
        }
        coeffs[0] = canon;
        let l2 = coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l2 > 1.0 + 1e-9 {
            return Err(Error::NormBound(format!("state l2 norm {l2} exceeds 1")));
        }
        Ok(PtmState { n, coeffs })
    }

    /// Computational basis state `|bits>`, bit `q` of `bits` for qubit `q`.
    pub fn computational(n: usize, bits: usize) -> Self {
        let mut coeffs = vec![0.0; dim4(n)];
        let c = trace_coeff(n);
        // Nonzero only on {I, Z} strings; each Z on qubit q contributes (-1)^bit_q.
        for subset in 0..dim2(n) {
            let mut idx = 0usize;
            let mut sign = 1.0;
            for q in 0..n {
                if (subset >> q) & 1 == 1 {
                    idx |= 3 << (2 * q);
                    if (bits >> q) & 1 == 1 {
                        sign = -sign;
                    }
                }
            }
            coeffs[idx] = c * sign;
        }
        PtmState { n, coeffs }
    }

    pub fn zero_state(n: usize) -> Self {
        PtmState::computational(n, 0)
    }

    /// `|+>^n`, the uniform superposition.
    pub fn plus_state(n: usize) -> Self {
        let mut coeffs = vec![0.0; dim4(n)];
        let c = trace_coeff(n);
        for subset in 0..dim2(n) {
            let mut idx = 0usize;
            for q in 0..n {
                if (subset >> q) & 1 == 1 {
                    idx |= 1 << (2 * q);
                }
            }
            coeffs[idx] = c;
        }
        PtmState { n, coeffs }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let mut coeffs = vec![0.0; dim4(n)];
        coeffs[0] = trace_coeff(n);
        PtmState { n, coeffs }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// PTM of a linear map: `G[i][j] = 2^(-n) Tr(S_i O(S_j))`, dense and real.
#[derive(Clone, Debug, PartialEq)]
pub struct PtmOperator {
    n: usize,
    mat: Mat,
}

impl PtmOperator {
    pub fn new(n: usize, mat: Mat) -> Result<Self> {
        if mat.dim() != dim4(n) {
            return Err(Error::DimensionMismatch(format!(
                "PTM dim {} != 4^{}",
                mat.dim(),
                n
            )));
        }
        Ok(PtmOperator { n, mat })
    }

    /// Infers the qubit count from the matrix dimension (must be a power of 4).
    pub fn from_mat(mat: Mat) -> Result<Self> {
        let d = mat.dim();
        let mut n = 0usize;
        while dim4(n) < d {
            n += 1;
        }
        if dim4(n) != d || n == 0 {
            return Err(Error::DimensionMismatch(format!("PTM dim {d} is not 4^n")));
        }
        Ok(PtmOperator { n, mat })
    }

    pub fn identity(n: usize) -> Self {
        PtmOperator { n, mat: Mat::identity(dim4(n)) }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn mat_mut(&mut self) -> &mut Mat {
        &mut self.mat
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        self.mat.matvec(v)
    }

    pub fn apply(&self, state: &PtmState) -> Result<PtmState> {
        if state.n != self.n {
            return Err(Error::DimensionMismatch("operator/state qubit mismatch".into()));
        }
        PtmState::new(self.n, self.mat.matvec(&state.coeffs))
    }

    /// Trace preservation holds exactly when the first row is `e_0`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let row = self.mat.row(0);
        let mut worst = (row[0] - 1.0).abs();
        for &x in &row[1..] {
            worst = worst.max(x.abs());
        }
        worst
    }

    /// `max_ij |(G^T G - I)_ij|`; zero for PTMs of unitary conjugations.
    pub fn orthogonality_residual(&self) -> f64 {
        let gram = self.mat.transpose().matmul(&self.mat);
        gram.max_abs_diff(&Mat::identity(self.mat.dim()))
    }

    pub fn max_singular_value(&self) -> f64 {
        self.mat.max_singular_value()
    }
}

/// PTM row vector of an observable: `o[i] = 2^(-n/2) Tr(S_i M)`.
///
/// Construction enforces the spectral-norm proxy `||o||_2 <= 2^(n/2)`, which
/// holds for every observable with eigenvalues in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    n: usize,
    coeffs: Vec<f64>,
}

impl Observable {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dim4(n) {
            return Err(Error::DimensionMismatch(format!(
                "observable length {} != 4^{}",
                coeffs.len(),
                n
            )));
        }
        let l2 = coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cap = dim2(n) as f64;
        let cap = cap.sqrt();
        if l2 > cap * (1.0 + 1e-9) {
            return Err(Error::NormBound(format!(
                "observable l2 norm {l2} exceeds 2^(n/2) = {cap}"
            )));
        }
        Ok(Observable { n, coeffs })
    }

    /// Pauli `Z` on one qubit (identity elsewhere).
    pub fn z_on(n: usize, qubit: usize) -> Result<Self> {
        let idx = PauliIndex::single(n, qubit, 3)?;
        let mut coeffs = vec![0.0; dim4(n)];
        coeffs[idx.code()] = (dim2(n) as f64).sqrt();
        Observable::new(n, coeffs)
    }

    /// Observable from a weighted sum of Pauli strings, `M = sum w_k S_k`.
    pub fn from_pauli_terms(n: usize, terms: &[(PauliIndex, f64)]) -> Result<Self> {
        let mut coeffs = vec![0.0; dim4(n)];
        let scale = (dim2(n) as f64).sqrt();
        for (idx, w) in terms {
            if idx.qubits() != n {
                return Err(Error::DimensionMismatch("term qubit count mismatch".into()));
            }
            coeffs[idx.code()] += scale * w;
        }
        Observable::new(n, coeffs)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// True when the identity component vanishes (`Tr M = 0`), which the
    /// dynamic-range bound assumes.
    pub fn zero_bias(&self) -> bool {
        self.coeffs[0] == 0.0
    }
}

/// `r = o . v`, equal to `Tr(M rho)` for the represented pair.
pub fn expectation(obs: &Observable, state: &PtmState) -> f64 {
    assert_eq!(obs.n, state.n, "observable/state qubit mismatch");
    obs.coeffs.iter().zip(&state.coeffs).map(|(a, b)| a * b).sum()
}

/// PTM of conjugation by a unitary, `O(rho) = U rho U^dagger`.
///
/// The matrix must be unitary within 1e-10; imaginary residues above 1e-10
/// in the PTM entries are rejected.
pub fn unitary_to_ptm(u: &CMat) -> Result<PtmOperator> {
    let n = qubits_from_dim(u.dim())?;
    let res = u.unitarity_residual();
    if res > 1e-10 {
        return Err(Error::NotUnitary(res));
    }
    let d2 = dim2(n);
    let d4 = dim4(n);
    let udag = u.adjoint();
    let norm = 1.0 / d2 as f64;
    let mut mat = Mat::zeros(d4);
    let mut worst_im = 0.0f64;
    for j in 0..d4 {
        // B = U S_j U^dagger, with U S_j formed by permuting/scaling columns.
        let xm = x_mask(j, n);
        let mut usj = CMat::zeros(d2);
        for r in 0..d2 {
            for c in 0..d2 {
                let k = c ^ xm;
                let (_, val) = pauli_row_entry(j, n, k);
                usj.set(r, c, u.get(r, k) * val);
            }
        }
        let b = usj.matmul(&udag);
        for i in 0..d4 {
            let t = pauli_trace_with(i, n, &b);
            worst_im = worst_im.max(t.im.abs());
            mat.set(i, j, t.re * norm);
        }
    }
    if worst_im * norm > 1e-10 {
        return Err(Error::ImaginaryResidue(worst_im * norm));
    }
    PtmOperator::new(n, mat)
}

/// PTM state of a density matrix (Hermitian, unit trace, PSD within 1e-10).
pub fn density_to_ptm(rho: &CMat) -> Result<PtmState> {
    let n = qubits_from_dim(rho.dim())?;
    let herm = rho.hermiticity_residual();
    if herm > 1e-10 {
        return Err(Error::NotHermitian(herm));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::TraceNotOne(((tr.re - 1.0).powi(2) + tr.im.powi(2)).sqrt()));
    }
    let (lo, _) = rho.hermitian_eigen_range();
    if lo < -1e-10 {
        return Err(Error::NotPositive(lo));
    }
    let scale = trace_coeff(n);
    let mut coeffs = vec![0.0; dim4(n)];
    let mut worst_im = 0.0f64;
    for (i, c) in coeffs.iter_mut().enumerate() {
        let t = pauli_trace_with(i, n, rho);
        worst_im = worst_im.max(t.im.abs());
        *c = scale * t.re;
    }
    if worst_im > 1e-10 {
        return Err(Error::ImaginaryResidue(worst_im));
    }
    PtmState::new(n, coeffs)
}

/// PTM row vector of a Hermitian observable. With `strict` set, eigenvalues
/// must lie in [-1, 1] (within 1e-9).
pub fn observable_to_ptm(m: &CMat, strict: bool) -> Result<Observable> {
    let n = qubits_from_dim(m.dim())?;
    let herm = m.hermiticity_residual();
    if herm > 1e-10 {
        return Err(Error::NotHermitian(herm));
    }
    if strict {
        let (lo, hi) = m.hermitian_eigen_range();
        if lo < -1.0 - 1e-9 || hi > 1.0 + 1e-9 {
            return Err(Error::SpectrumOutOfRange { lo, hi });
        }
    }
    let scale = trace_coeff(n);
    let mut coeffs = vec![0.0; dim4(n)];
    for (i, c) in coeffs.iter_mut().enumerate() {
        let t = pauli_trace_with(i, n, m);
        if t.im.abs() > 1e-10 {
            return Err(Error::ImaginaryResidue(t.im.abs()));
        }
        *c = scale * t.re;
    }
    Observable::new(n, coeffs)
}

fn qubits_from_dim(d: usize) -> Result<usize> {
    let mut n = 0usize;
    while dim2(n) < d {
        n += 1;
    }
    if dim2(n) != d || n == 0 {
        return Err(Error::DimensionMismatch(format!("matrix dim {d} is not 2^n")));
    }
    Ok(n)
}

/// PTM of conjugation by `exp(-i theta P / 2)`, stored sparsely.
///
/// Columns split into fixed points (strings commuting with `P`) and 2-cycles:
/// for anticommuting `S_j`, the image is `cos(theta) S_j + sigma_j sin(theta)
/// S_m` with `S_m` proportional to `S_j P`. Each 2-cycle is a plane rotation,
/// so applying the whole PTM is `O(4^n)`.
#[derive(Clone, Debug)]
pub struct PauliRotation {
    n: usize,
    generator: PauliIndex,
    theta: f64,
    cos_t: f64,
    sin_t: f64,
    /// `(j, m, sigma_j)` with `j < m`; rows transform as
    /// `w_j = c v_j - sigma s v_m`, `w_m = sigma s v_j + c v_m`.
    pairs: Vec<(u32, u32, f64)>,
}

impl PauliRotation {
    pub fn new(generator: PauliIndex, theta: f64) -> Self {
        let n = generator.qubits();
        let p = generator.code();
        let d4 = dim4(n);
        let mut pairs = Vec::new();
        for j in 0..d4 {
            if codes_commute(j, p, n) {
                continue;
            }
            let (m, t) = codes_product(j, p, n);
            if j < m {
                // i S_j S_p = i^(1+t) S_m; anticommuting products have odd t,
                // so the coefficient is +1 for t = 3 and -1 for t = 1.
                let sigma = if t == 3 { 1.0 } else { -1.0 };
                pairs.push((j as u32, m as u32, sigma));
            }
        }
        PauliRotation {
            n,
            generator,
            theta,
            cos_t: theta.cos(),
            sin_t: theta.sin(),
            pairs,
        }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn generator(&self) -> PauliIndex {
        self.generator
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn pairs(&self) -> &[(u32, u32, f64)] {
        &self.pairs
    }

    pub fn apply(&self, v: &mut [f64]) {
        let (c, s) = (self.cos_t, self.sin_t);
        for &(j, m, sigma) in &self.pairs {
            let (j, m) = (j as usize, m as usize);
            let vj = v[j];
            let vm = v[m];
            v[j] = c * vj - sigma * s * vm;
            v[m] = sigma * s * vj + c * vm;
        }
    }

    /// `A <- G A G^T` in place.
    pub fn conjugate_moment(&self, a: &mut Mat) {
        let d = a.dim();
        let (c, s) = (self.cos_t, self.sin_t);
        // Row rotations.
        for &(j, m, sigma) in &self.pairs {
            let (j, m) = (j as usize, m as usize);
            for k in 0..d {
                let aj = a.get(j, k);
                let am = a.get(m, k);
                a.set(j, k, c * aj - sigma * s * am);
                a.set(m, k, sigma * s * aj + c * am);
            }
        }
        // Column rotations.
        for &(j, m, sigma) in &self.pairs {
            let (j, m) = (j as usize, m as usize);
            for k in 0..d {
                let aj = a.get(k, j);
                let am = a.get(k, m);
                a.set(k, j, c * aj - sigma * s * am);
                a.set(k, m, sigma * s * aj + c * am);
            }
        }
    }

    pub fn to_ptm(&self) -> PtmOperator {
        let d = dim4(self.n);
        let mut m = Mat::identity(d);
        let (c, s) = (self.cos_t, self.sin_t);
        for &(j, mm, sigma) in &self.pairs {
            let (j, mm) = (j as usize, mm as usize);
            m.set(j, j, c);
            m.set(mm, mm, c);
            // Column j picks up sigma_j sin on row m; column m the opposite sign.
            m.set(mm, j, sigma * s);
            m.set(j, mm, -sigma * s);
        }
        PtmOperator::new(self.n, m).expect("dimensions are consistent by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_phases_match_pauli_algebra() {
        let x = PauliIndex::new(1, 1).unwrap();
        let y = PauliIndex::new(2, 1).unwrap();
        let z = PauliIndex::new(3, 1).unwrap();
        // XY = iZ, YX = -iZ, YZ = iX, ZX = iY
        assert_eq!(x.product(&y), (z, 1));
        assert_eq!(y.product(&x), (z, 3));
        assert_eq!(y.product(&z), (x, 1));
        assert_eq!(z.product(&x), (y, 1));
        assert!(!x.commutes_with(&y));
        assert!(x.commutes_with(&x));
    }

    #[test]
    fn product_phase_matches_dense_matrices() {
        for a in 0..16usize {
            for b in 0..16usize {
                let pa = PauliIndex::new(a, 2).unwrap();
                let pb = PauliIndex::new(b, 2).unwrap();
                let (pc, t) = pa.product(&pb);
                let dense = pauli_matrix(pa).matmul(&pauli_matrix(pb));
                let phase = c(0.0, 1.0).powu(t as u32);
                let target = pauli_matrix(pc);
                for r in 0..4 {
                    for cc in 0..4 {
                        let diff = dense.get(r, cc) - phase * target.get(r, cc);
                        assert!(diff.norm() < 1e-12, "product mismatch at ({a},{b})");
                    }
                }
            }
        }
    }

    #[test]
    fn walsh_single_qubit_rows() {
        let w = walsh_matrix(1).unwrap();
        let rows = [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w.get(i, j), rows[i][j]);
            }
        }
    }

    #[test]
    fn walsh_fast_transform_matches_dense() {
        let n = 2;
        let w = walsh_matrix(n).unwrap();
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = w.matvec(&v);
        let mut fast = v.clone();
        walsh_apply(&mut fast, n);
        for (a, b) in dense.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn walsh_involution() {
        for n in 1..=3usize {
            let d = dim4(n);
            let mut v: Vec<f64> = (0..d).map(|i| (i as f64 * 0.11).cos()).collect();
            let orig = v.clone();
            walsh_apply(&mut v, n);
            walsh_apply(&mut v, n);
            for (a, b) in v.iter().zip(&orig) {
                assert!((a - d as f64 * b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pauli_matrix_y_frozen() {
        let y = pauli_matrix(PauliIndex::new(2, 1).unwrap());
        assert_eq!(y.get(0, 0), c(0.0, 0.0));
        assert_eq!(y.get(0, 1), c(0.0, -1.0));
        assert_eq!(y.get(1, 0), c(0.0, 1.0));
        assert_eq!(y.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn sparse_trace_matches_dense() {
        // Tr(S_i S_j) = 2^n delta_ij
        for i in 0..16usize {
            for j in 0..16usize {
                let m = pauli_matrix(PauliIndex::new(j, 2).unwrap());
                let t = pauli_trace_with(i, 2, &m);
                let expect = if i == j { 4.0 } else { 0.0 };
                assert!((t.re - expect).abs() < 1e-12 && t.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_and_plus_states_frozen() {
        let zero = PtmState::zero_state(1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(zero.coeffs(), &[s, 0.0, 0.0, s]);
        let plus = PtmState::plus_state(1);
        assert_eq!(plus.coeffs(), &[s, s, 0.0, 0.0]);
        // ZZ component of |00> on two qubits sits at index 15.
        let zz = PtmState::zero_state(2);
        assert_eq!(zz.coeffs()[15], 0.5);
        assert_eq!(zz.coeffs()[0], 0.5);
    }

    #[test]
    fn z_observable_frozen() {
        let z = Observable::z_on(1, 0).unwrap();
        assert_eq!(z.coeffs(), &[0.0, 0.0, 0.0, std::f64::consts::SQRT_2]);
        assert!(z.zero_bias());
        let zz = Observable::from_pauli_terms(2, &[(PauliIndex::new(15, 2).unwrap(), 1.0)])
            .unwrap();
        assert_eq!(zz.coeffs()[15], 2.0);
    }

    #[test]
    fn expectation_pairs_like_traces() {
        let z = Observable::z_on(1, 0).unwrap();
        assert!((expectation(&z, &PtmState::zero_state(1)) - 1.0).abs() < 1e-12);
        assert!(expectation(&z, &PtmState::plus_state(1)).abs() < 1e-12);
        assert!(expectation(&z, &PtmState::maximally_mixed(1)).abs() < 1e-12);
    }

    #[test]
    fn x_gate_ptm_is_diagonal_signs() {
        let mut x = CMat::zeros(2);
        x.set(0, 1, c(1.0, 0.0));
        x.set(1, 0, c(1.0, 0.0));
        let g = unitary_to_ptm(&x).unwrap();
        let expect = [1.0, 1.0, -1.0, -1.0];
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { expect[i] } else { 0.0 };
                assert!((g.mat().get(i, j) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exp_minus_i_theta_x_rotates_block_by_two_theta() {
        // U = exp(-i theta X) = cos(theta) I - i sin(theta) X conjugates the
        // (Y, Z) block by 2 theta.
        let theta = 0.3f64;
        let mut u = CMat::zeros(2);
        u.set(0, 0, c(theta.cos(), 0.0));
        u.set(1, 1, c(theta.cos(), 0.0));
        u.set(0, 1, c(0.0, -theta.sin()));
        u.set(1, 0, c(0.0, -theta.sin()));
        let g = unitary_to_ptm(&u).unwrap();
        let rot = PauliRotation::new(PauliIndex::new(1, 1).unwrap(), 2.0 * theta);
        assert!(g.mat().max_abs_diff(rot.to_ptm().mat()) < 1e-12);
        assert!((g.mat().get(2, 2) - (2.0 * theta).cos()).abs() < 1e-12);
    }

    #[test]
    fn rotation_ptm_matches_unitary_conversion() {
        // Pin the sparse constructor's signs against the dense unitary-to-PTM
        // conversion for a single- and a two-qubit generator.
        for (code, n) in [(1usize, 1usize), (3, 1), (7, 2), (9, 2)] {
            let theta = 0.7f64;
            let p = PauliIndex::new(code, n).unwrap();
            let pm = pauli_matrix(p);
            let d = dim2(n);
            let mut u = CMat::zeros(d);
            let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            for r in 0..d {
                for cc in 0..d {
                    let ident = if r == cc { c(ct, 0.0) } else { c(0.0, 0.0) };
                    u.set(r, cc, ident - c(0.0, st) * pm.get(r, cc));
                }
            }
            let via_unitary = unitary_to_ptm(&u).unwrap();
            let rot = PauliRotation::new(p, theta).to_ptm();
            assert!(
                via_unitary.mat().max_abs_diff(rot.mat()) < 1e-12,
                "rotation mismatch for generator {}",
                p
            );
        }
    }

    #[test]
    fn rotation_apply_matches_dense() {
        let p = PauliIndex::new(7, 2).unwrap();
        let rot = PauliRotation::new(p, 0.41);
        let dense = rot.to_ptm();
        let v: Vec<f64> = (0..16).map(|i| (0.2 * i as f64).sin()).collect();
        let mut fast = v.clone();
        rot.apply(&mut fast);
        let slow = dense.apply_vec(&v);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_moment_conjugation_matches_dense() {
        let p = PauliIndex::new(6, 2).unwrap();
        let rot = PauliRotation::new(p, 1.1);
        let g = rot.to_ptm();
        let mut a = Mat::zeros(16);
        for r in 0..16 {
            for cc in 0..16 {
                let v = ((r * 7 + cc * 3) as f64 * 0.05).sin();
                a.set(r, cc, v);
            }
        }
        let mut fast = a.clone();
        rot.conjugate_moment(&mut fast);
        let slow = g.mat().matmul(&a).matmul(&g.mat().transpose());
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn density_conversion_frozen_plus_state() {
        let mut rho = CMat::zeros(2);
        for r in 0..2 {
            for cc in 0..2 {
                rho.set(r, cc, c(0.5, 0.0));
            }
        }
        let v = density_to_ptm(&rho).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in v.coeffs().iter().zip(&[s, s, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn observable_conversion_strict_mode() {
        // Spectrum {1.2, 0}: Frobenius norm fits the type bound, but the top
        // eigenvalue breaks the strict spectral window.
        let mut m = CMat::zeros(2);
        m.set(0, 0, c(1.2, 0.0));
        assert!(matches!(
            observable_to_ptm(&m, true),
            Err(Error::SpectrumOutOfRange { .. })
        ));
        let loose = observable_to_ptm(&m, false).unwrap();
        let expect = 0.6 * std::f64::consts::SQRT_2;
        assert!((loose.coeffs()[0] - expect).abs() < 1e-12);
        assert!((loose.coeffs()[3] - expect).abs() < 1e-12);
        // Norm violations are rejected in both modes (type invariant).
        let mut big = CMat::zeros(2);
        big.set(0, 0, c(2.0, 0.0));
        big.set(1, 1, c(-2.0, 0.0));
        assert!(matches!(
            observable_to_ptm(&big, true),
            Err(Error::SpectrumOutOfRange { .. })
        ));
        assert!(matches!(
            observable_to_ptm(&big, false),
            Err(Error::NormBound(_))
        ));
    }

    #[test]
    fn state_invariants_enforced() {
        assert!(matches!(
            PtmState::new(1, vec![0.5, 0.0, 0.0, 0.0]),
            Err(Error::BadTraceCoeff(_))
        ));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(matches!(
            PtmState::new(1, vec![s, 1.0, 0.0, 0.0]),
            Err(Error::NormBound(_))
        ));
        // A value within 1e-9 of 2^(-n/2) snaps to it exactly.
        let snapped = PtmState::new(1, vec![s + 1e-12, 0.0, 0.0, s]).unwrap();
        assert_eq!(snapped.coeffs()[0], s);
    }

    #[test]
    fn pauli_index_bounds() {
        assert!(PauliIndex::new(15, 2).is_ok());
        assert!(PauliIndex::new(16, 2).is_err());
        assert!(PauliIndex::single(2, 2, 1).is_err());
        let zz = PauliIndex::from_digits(&[3, 3]).unwrap();
        assert_eq!(zz.code(), 15);
        assert_eq!(zz.label(), "ZZ");
        let z1 = PauliIndex::single(2, 1, 3).unwrap();
        assert_eq!(z1.code(), 12);
    }
}
