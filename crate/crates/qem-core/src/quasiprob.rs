//! Quasi-probability inversion of noise channels.
//!
//! The inverse `C^-1` of a noise channel is expanded over a set of physical
//! operations, `C^-1 = sum_l alpha_l O_l`, where the real coefficients may be
//! negative. A sampler realizes the inverse on average by drawing `O_l` with
//! probability `|alpha_l| / norm1` and weighting estimates by
//! `norm1 * sign(alpha_l)`; `norm1^2` is the sampling overhead factor.
//!
//! For Pauli channels the expansion is closed-form over Pauli gates (whose
//! PTMs are the Walsh matrix columns). General single-qubit channels are
//! expanded over a 16-operation basis via a linear solve.
//!
//! [`draw_empirical`] produces the finite-sample (frequency) version of a
//! decomposition, and [`residual_covariance`] its exact second-order
//! statistics, which is what the moment recursion in the simulator consumes.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::channels::{Channel, GeneralChannel, PauliChannel};
use crate::mat::Mat;
use crate::pauli::{dim4, walsh_apply, walsh_column, PauliIndex, PauliRotation, PtmOperator};
use crate::{Error, Result};

/// Operations a decomposition is expanded over.
#[derive(Clone, Debug)]
pub enum OperationBasis {
    /// All `4^n` Pauli-gate conjugations; op `l` has the diagonal PTM given by
    /// Walsh column `l`. Used for Pauli channel inversion.
    PauliGates { n: usize },
    /// Explicit list of PTMs (e.g. [`default_single_qubit_basis`]).
    Explicit { ops: Vec<PtmOperator> },
}

impl OperationBasis {
    pub fn len(&self) -> usize {
        match self {
            OperationBasis::PauliGates { n } => dim4(*n),
            OperationBasis::Explicit { ops } => ops.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn qubits(&self) -> usize {
        match self {
            OperationBasis::PauliGates { n } => *n,
            OperationBasis::Explicit { ops } => ops[0].qubits(),
        }
    }
}

/// Signed expansion of an inverse channel over an operation basis.
#[derive(Clone, Debug)]
pub struct QuasiProbDecomposition {
    basis: OperationBasis,
    alpha: Vec<f64>,
    signs: Vec<f64>,
    sampling_probs: Vec<f64>,
    norm1: f64,
    /// Indices with `alpha != 0`, the only ones a sampler can draw.
    support: Vec<usize>,
}

impl QuasiProbDecomposition {
    fn from_alpha(basis: OperationBasis, alpha: Vec<f64>) -> Self {
        let norm1: f64 = alpha.iter().map(|a| a.abs()).sum();
        let signs: Vec<f64> = alpha.iter().map(|a| if *a < 0.0 { -1.0 } else { 1.0 }).collect();
        let sampling_probs: Vec<f64> = alpha.iter().map(|a| a.abs() / norm1).collect();
        let support: Vec<usize> = alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(l, _)| l)
            .collect();
        QuasiProbDecomposition { basis, alpha, signs, sampling_probs, norm1, support }
    }

    pub fn basis(&self) -> &OperationBasis {
        &self.basis
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn sampling_probs(&self) -> &[f64] {
        &self.sampling_probs
    }

    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `norm1^2`, the variance inflation of a sampling estimator per use.
    pub fn sampling_overhead_factor(&self) -> f64 {
        self.norm1 * self.norm1
    }

    /// Dense PTM of `sum_l alpha_l O_l` (the represented inverse).
    pub fn reconstruct_ptm(&self) -> PtmOperator {
        match &self.basis {
            OperationBasis::PauliGates { n } => {
                let d = dim4(*n);
                let mut diag = self.alpha.clone();
                walsh_apply(&mut diag, *n);
                let mut m = Mat::zeros(d);
                for i in 0..d {
                    m.set(i, i, diag[i]);
                }
                PtmOperator::new(*n, m).expect("consistent dims")
            }
            OperationBasis::Explicit { ops } => {
                let d = ops[0].mat().dim();
                let mut m = Mat::zeros(d);
                for (a, op) in self.alpha.iter().zip(ops) {
                    if *a == 0.0 {
                        continue;
                    }
                    for r in 0..d {
                        for c in 0..d {
                            m.set(r, c, m.get(r, c) + a * op.mat().get(r, c));
                        }
                    }
                }
                PtmOperator::from_mat(m).expect("consistent dims")
            }
        }
    }
}

/// Inverts a Pauli channel over the Pauli-gate basis:
/// `alpha = 4^-n W (1 / c)` with `c` the channel diagonal.
///
/// Fails when any diagonal entry is smaller than 1e-12 in magnitude.
pub fn invert_pauli(ch: &PauliChannel) -> Result<QuasiProbDecomposition> {
    let n = ch.qubits();
    for (i, &c) in ch.diag().iter().enumerate() {
        if c.abs() < 1e-12 {
            return Err(Error::NotInvertible { index: i, value: c });
        }
    }
    let mut alpha: Vec<f64> = ch.diag().iter().map(|c| 1.0 / c).collect();
    walsh_apply(&mut alpha, n);
    let scale = 1.0 / dim4(n) as f64;
    for a in alpha.iter_mut() {
        *a *= scale;
    }
    Ok(QuasiProbDecomposition::from_alpha(OperationBasis::PauliGates { n }, alpha))
}

/// Inverts a general channel over an explicit operation basis.
///
/// The basis must span the full `(4^n)^2`-dimensional operator space; a
/// rank-deficient basis is rejected. The solve is exact (unique coefficients
/// for a square basis) and the reconstruction is verified to 1e-9.
pub fn invert_general(
    ch: &GeneralChannel,
    basis: &[PtmOperator],
) -> Result<QuasiProbDecomposition> {
    let n = ch.qubits();
    let d = dim4(n);
    let needed = d * d;
    for op in basis {
        if op.qubits() != n {
            return Err(Error::DimensionMismatch(
                "basis operation qubit count mismatch".into(),
            ));
        }
    }
    let inv = match ch.ptm().mat().inverse() {
        Some(m) => m,
        None => return Err(Error::SingularChannel),
    };

    // Columns are vectorized basis PTMs.
    let mut b = nalgebra::DMatrix::<f64>::zeros(needed, basis.len());
    for (l, op) in basis.iter().enumerate() {
        for (k, &v) in op.mat().data().iter().enumerate() {
            b[(k, l)] = v;
        }
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9 * smax).count();
    if rank < needed {
        return Err(Error::RankDeficientBasis { rank, needed });
    }
    let target = nalgebra::DVector::from_column_slice(inv.data());
    let alpha_v = svd
        .solve(&target, 1e-12 * smax)
        .map_err(|_| Error::RankDeficientBasis { rank, needed })?;
    let alpha: Vec<f64> = alpha_v.iter().copied().collect();

    let decomp = QuasiProbDecomposition::from_alpha(
        OperationBasis::Explicit { ops: basis.to_vec() },
        alpha,
    );
    let residual = decomp.reconstruct_ptm().mat().max_abs_diff(&inv);
    if residual > 1e-9 {
        return Err(Error::NormBound(format!(
            "basis reconstruction residual {residual:.3e} exceeds 1e-9"
        )));
    }
    Ok(decomp)
}

/// Inverts either channel kind, using the default 16-operation basis for
/// single-qubit general channels.
pub fn invert_channel(ch: &Channel) -> Result<QuasiProbDecomposition> {
    match ch {
        Channel::Pauli(c) => invert_pauli(c),
        Channel::General(c) => {
            if c.qubits() != 1 {
                return Err(Error::DimensionMismatch(
                    "no default operation basis beyond one qubit; call invert_general".into(),
                ));
            }
            invert_general(c, &default_single_qubit_basis())
        }
    }
}

/// PTM of a unitary Bloch-sphere rotation by `theta` about `axis`.
pub fn bloch_rotation_ptm(axis: [f64; 3], theta: f64) -> PtmOperator {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let nvec = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
    let (c, s) = (theta.cos(), theta.sin());
    let mut m = Mat::zeros(4);
    m.set(0, 0, 1.0);
    // R = cos I + (1 - cos) n n^T + sin [n]_x on the (X, Y, Z) block.
    let cross = [
        [0.0, -nvec[2], nvec[1]],
        [nvec[2], 0.0, -nvec[0]],
        [-nvec[1], nvec[0], 0.0],
    ];
    for r in 0..3 {
        for cc in 0..3 {
            let ident = if r == cc { 1.0 } else { 0.0 };
            let v = c * ident + (1.0 - c) * nvec[r] * nvec[cc] + s * cross[r][cc];
            m.set(r + 1, cc + 1, v);
        }
    }
    PtmOperator::new(1, m).expect("consistent dims")
}

fn projector_ptm(a: usize) -> PtmOperator {
    // pi_{+a}: PTM = (e0 + e_a)(e0 + e_a)^T / 2
    let mut m = Mat::zeros(4);
    for &r in &[0usize, a] {
        for &c in &[0usize, a] {
            m.set(r, c, 0.5);
        }
    }
    PtmOperator::new(1, m).expect("consistent dims")
}

fn ladder_ptm(a: usize, b: usize, b_sign: f64) -> PtmOperator {
    // Kraus |+a><+b| (or <-b| when b_sign = -1): PTM = v_a v_b^T / 2 with
    // v_x = e0 + sign e_x.
    let mut m = Mat::zeros(4);
    let rows = [(0usize, 1.0), (a, 1.0)];
    let cols = [(0usize, 1.0), (b, b_sign)];
    for &(r, rs) in &rows {
        for &(c, cs) in &cols {
            m.set(r, c, 0.5 * rs * cs);
        }
    }
    PtmOperator::new(1, m).expect("consistent dims")
}

/// The default 16-operation single-qubit basis: identity, the three Pauli
/// gates, six pi/2 rotations (principal and diagonal axes), three projections
/// onto +X/+Y/+Z eigenstates, and three rank-one "ladder" maps between
/// eigenstates. Every operation is physical (CPTP or trace non-increasing,
/// PTM singular values at most 1), the first is the identity, and together
/// they span the full 16-dimensional operator space; the span is re-verified
/// at every call.
pub fn default_single_qubit_basis() -> Vec<PtmOperator> {
    let frac_pi_2 = std::f64::consts::FRAC_PI_2;
    let mut ops: Vec<PtmOperator> = Vec::with_capacity(16);
    ops.push(PtmOperator::identity(1));
    for axis in 1..=3usize {
        let mut m = Mat::zeros(4);
        let col = walsh_column(axis, 1);
        for (i, &s) in col.iter().enumerate() {
            m.set(i, i, s);
        }
        ops.push(PtmOperator::new(1, m).expect("consistent dims"));
    }
    for axis in 1..=3usize {
        let p = PauliIndex::new(axis, 1).expect("single-qubit axis");
        ops.push(PauliRotation::new(p, frac_pi_2).to_ptm());
    }
    ops.push(bloch_rotation_ptm([0.0, 1.0, 1.0], frac_pi_2));
    ops.push(bloch_rotation_ptm([1.0, 0.0, 1.0], frac_pi_2));
    ops.push(bloch_rotation_ptm([1.0, 1.0, 0.0], frac_pi_2));
    for a in 1..=3usize {
        ops.push(projector_ptm(a));
    }
    ops.push(ladder_ptm(1, 2, 1.0));
    ops.push(ladder_ptm(2, 3, 1.0));
    // The minus sign keeps the three ladder maps independent of the
    // projections; with |+z><+x| instead, the sixteen operations only span a
    // 15-dimensional space.
    ops.push(ladder_ptm(3, 1, -1.0));

    let mut b = Mat::zeros(16);
    for (l, op) in ops.iter().enumerate() {
        for (k, &v) in op.mat().data().iter().enumerate() {
            b.set(k, l, v);
        }
    }
    assert_eq!(b.rank(1e-9), 16, "default basis must span the operator space");
    ops
}

/// Frequencies from actually sampling a decomposition finitely many times.
#[derive(Clone, Debug)]
pub struct EmpiricalDecomposition {
    support: Vec<usize>,
    counts: Vec<u64>,
    draws: u64,
    /// `alpha_tilde[l] = norm1 * sign_l * counts_l / draws`, support-aligned.
    alpha_tilde: Vec<f64>,
}

impl EmpiricalDecomposition {
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn alpha_tilde(&self) -> &[f64] {
        &self.alpha_tilde
    }
}

/// Number of draws a sampler spends on one gate: `max(1, round(Ns * norm1^2))`.
pub fn empirical_draw_count(d: &QuasiProbDecomposition, ns: u64) -> u64 {
    let raw = (ns as f64 * d.sampling_overhead_factor()).round();
    (raw as u64).max(1)
}

/// Samples `N_k = max(1, round(ns * norm1^2))` basis operations and returns
/// the resulting empirical decomposition. All randomness comes from `rng`, so
/// equal seeds give equal counts.
pub fn draw_empirical<R: Rng + ?Sized>(
    d: &QuasiProbDecomposition,
    ns: u64,
    rng: &mut R,
) -> EmpiricalDecomposition {
    let draws = empirical_draw_count(d, ns);
    draw_empirical_exact(d, draws, rng)
}

/// Same as [`draw_empirical`] but with the draw count given directly.
pub fn draw_empirical_exact<R: Rng + ?Sized>(
    d: &QuasiProbDecomposition,
    draws: u64,
    rng: &mut R,
) -> EmpiricalDecomposition {
    // Multinomial via conditional binomials over the support.
    let k = d.support.len();
    let mut counts = vec![0u64; k];
    let mut remaining = draws;
    let mut rest = 1.0f64;
    for (slot, &l) in d.support.iter().enumerate() {
        if slot + 1 == k {
            counts[slot] = remaining;
            break;
        }
        if remaining == 0 {
            break;
        }
        let p = (d.sampling_probs[l] / rest).clamp(0.0, 1.0);
        let c = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).expect("probability in range").sample(rng)
        };
        counts[slot] = c;
        remaining -= c;
        rest = (rest - d.sampling_probs[l]).max(0.0);
    }
    from_counts(d, counts, draws)
}

/// Builds an empirical decomposition from explicit counts (summing to
/// `draws`). Exposed for exhaustive small-sample enumeration in tests.
pub fn empirical_from_counts(
    d: &QuasiProbDecomposition,
    counts: Vec<u64>,
) -> Result<EmpiricalDecomposition> {
    if counts.len() != d.support.len() {
        return Err(Error::DimensionMismatch(
            "one count per support operation required".into(),
        ));
    }
    let draws: u64 = counts.iter().sum();
    if draws == 0 {
        return Err(Error::ParamRange("draw count must be positive".into()));
    }
    Ok(from_counts(d, counts, draws))
}

fn from_counts(
    d: &QuasiProbDecomposition,
    counts: Vec<u64>,
    draws: u64,
) -> EmpiricalDecomposition {
    let alpha_tilde: Vec<f64> = d
        .support
        .iter()
        .zip(&counts)
        .map(|(&l, &c)| d.norm1 * d.signs[l] * c as f64 / draws as f64)
        .collect();
    EmpiricalDecomposition { support: d.support.clone(), counts, draws, alpha_tilde }
}

/// Diagonal of the residual channel `Gamma_tilde C` for a Pauli channel:
/// `c_tilde = (W alpha_tilde) .* c`. Equals the all-ones vector exactly when
/// the empirical frequencies hit the ideal quasi-probabilities.
pub fn residual_channel_pauli(
    d: &QuasiProbDecomposition,
    emp: &EmpiricalDecomposition,
    ch: &PauliChannel,
) -> Result<Vec<f64>> {
    let n = match d.basis {
        OperationBasis::PauliGates { n } => n,
        _ => return Err(Error::NotAPauliChannel),
    };
    if ch.qubits() != n {
        return Err(Error::DimensionMismatch("channel qubit mismatch".into()));
    }
    let dlen = dim4(n);
    let mut acc = vec![0.0f64; dlen];
    for (&l, &a) in emp.support.iter().zip(&emp.alpha_tilde) {
        if a == 0.0 {
            continue;
        }
        let col = walsh_column(l, n);
        for (x, w) in acc.iter_mut().zip(&col) {
            *x += a * w;
        }
    }
    for (x, c) in acc.iter_mut().zip(ch.diag()) {
        *x *= c;
    }
    Ok(acc)
}

/// Dense PTM of the sampled inverse `Gamma_tilde = sum_l alpha_tilde_l O_l`
/// for an explicit basis.
pub fn reconstruct_gamma_general(
    d: &QuasiProbDecomposition,
    emp: &EmpiricalDecomposition,
) -> Result<PtmOperator> {
    let ops = match &d.basis {
        OperationBasis::Explicit { ops } => ops,
        _ => {
            return Err(Error::DimensionMismatch(
                "explicit basis required; Pauli path uses residual_channel_pauli".into(),
            ))
        }
    };
    let dd = ops[0].mat().dim();
    let mut m = Mat::zeros(dd);
    for (&l, &a) in emp.support.iter().zip(&emp.alpha_tilde) {
        if a == 0.0 {
            continue;
        }
        for r in 0..dd {
            for c in 0..dd {
                m.set(r, c, m.get(r, c) + a * ops[l].mat().get(r, c));
            }
        }
    }
    PtmOperator::from_mat(m)
}

/// Exact covariance of the residual diagonal `c_tilde` under empirical
/// sampling with `N_k = max(1, round(ns * norm1^2))` draws:
///
/// `Xi = (norm1^2 / N_k) (W P W .* c c^T) - (1/N_k) 1 1^T`
///
/// with `P = diag(sampling_probs)`. Positive semidefinite, and bounded
/// entrywise by roughly `2 / ns`.
pub fn residual_covariance(
    d: &QuasiProbDecomposition,
    ch: &PauliChannel,
    ns: u64,
) -> Result<Mat> {
    residual_covariance_exact(d, ch, empirical_draw_count(d, ns))
}

/// [`residual_covariance`] with the draw count given directly.
pub fn residual_covariance_exact(
    d: &QuasiProbDecomposition,
    ch: &PauliChannel,
    draws: u64,
) -> Result<Mat> {
    let n = match d.basis {
        OperationBasis::PauliGates { n } => n,
        _ => return Err(Error::NotAPauliChannel),
    };
    if ch.qubits() != n {
        return Err(Error::DimensionMismatch("channel qubit mismatch".into()));
    }
    let dlen = dim4(n);
    let nk = draws as f64;
    // W P W via rank-one sign-vector outer products over the support.
    let mut wpw = Mat::zeros(dlen);
    for &l in &d.support {
        let p = d.sampling_probs[l];
        let col = walsh_column(l, n);
        for i in 0..dlen {
            let pi = p * col[i];
            let row = &mut wpw.data_mut()[i * dlen..(i + 1) * dlen];
            for (x, w) in row.iter_mut().zip(&col) {
                *x += pi * w;
            }
        }
    }
    let scale = d.sampling_overhead_factor() / nk;
    let offset = 1.0 / nk;
    let c = ch.diag();
    let mut xi = wpw;
    for i in 0..dlen {
        for j in 0..dlen {
            let v = scale * xi.get(i, j) * c[i] * c[j] - offset;
            xi.set(i, j, v);
        }
    }
    Ok(xi)
}

/// Exact second moment `E[alpha_tilde alpha_tilde^T]` over the basis index
/// space for `draws` samples:
/// `(1 - 1/N) alpha alpha^T + (norm1^2 / N) diag(sampling_probs)`.
pub fn empirical_second_moment(d: &QuasiProbDecomposition, draws: u64) -> Mat {
    let len = d.alpha.len();
    let nk = draws as f64;
    let mut m = Mat::zeros(len);
    let w1 = 1.0 - 1.0 / nk;
    let w2 = d.sampling_overhead_factor() / nk;
    for i in 0..len {
        for j in 0..len {
            m.set(i, j, w1 * d.alpha[i] * d.alpha[j]);
        }
        m.set(i, i, m.get(i, i) + w2 * d.sampling_probs[i]);
    }
    m
}

/// Additional whole-circuit samples needed to hold the unmitigated precision
/// after inverting every listed channel: `round(N0 * (prod norm1_k^2 - 1))`.
pub fn total_overhead_exact<'a, I>(n0: u64, decomps: I) -> Result<u64>
where
    I: IntoIterator<Item = &'a QuasiProbDecomposition>,
{
    let mut prod = 1.0f64;
    for d in decomps {
        prod *= d.sampling_overhead_factor();
    }
    let extra = n0 as f64 * (prod - 1.0);
    if !extra.is_finite() || extra > u64::MAX as f64 {
        return Err(Error::Overflow(format!(
            "overhead of {n0} base samples at factor {prod:.3e}"
        )));
    }
    Ok(extra.round() as u64)
}
