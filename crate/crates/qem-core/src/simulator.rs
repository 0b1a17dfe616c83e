//! Circuit propagation, Monte Carlo mitigation estimators, and the
//! second-moment recursion that predicts their RMSE.
//!
//! A circuit is a list of steps, each a gate followed by zero or more noise
//! channels. Estimators:
//!
//! * noiseless / noisy propagation (deterministic),
//! * exact quasi-probability mitigation (applies each channel inverse),
//! * `mc_empirical`: per gate, draw an empirical decomposition of the inverse
//!   with `N_k = max(1, round(Ns * norm1_k^2))` samples and propagate the
//!   resulting residual map deterministically,
//! * `mc_concat`: sample whole-circuit operation sequences,
//!   `N = max(1, round(Ns * prod norm1_k^2))` of them, and average the signed
//!   readouts scaled by `prod norm1_k`.
//!
//! The moment recursion tracks the estimator mean and second moment exactly
//! for the empirical mode, so its RMSE needs no sampling.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channels::{Channel, PauliChannel};
use crate::mat::Mat;
use crate::pauli::{
    dim4, expectation, walsh_column, walsh_sign, Observable, PauliIndex, PauliRotation,
    PtmOperator, PtmState,
};
use crate::quasiprob::{
    default_single_qubit_basis, draw_empirical_exact, empirical_draw_count, invert_general,
    invert_pauli, residual_covariance_exact, OperationBasis, QuasiProbDecomposition,
};
use crate::{Error, Result};

/// A circuit gate in PTM form, stored sparsely where the structure allows.
#[derive(Clone, Debug)]
pub enum Gate {
    /// Arbitrary PTM.
    Dense(PtmOperator),
    /// Conjugation by `exp(-i theta P / 2)`.
    Rotation(PauliRotation),
    /// Conjugation by a Pauli string: a `+/-1` diagonal.
    PauliConj { idx: PauliIndex, signs: Vec<f64> },
    /// No-op placeholder (useful for noise-only steps).
    Identity(usize),
}

impl Gate {
    pub fn pauli(idx: PauliIndex) -> Gate {
        let n = idx.qubits();
        let signs = (0..dim4(n)).map(|i| walsh_sign(i, idx.code(), n)).collect();
        Gate::PauliConj { idx, signs }
    }

    pub fn rotation(generator: PauliIndex, theta: f64) -> Gate {
        Gate::Rotation(PauliRotation::new(generator, theta))
    }

    pub fn qubits(&self) -> usize {
        match self {
            Gate::Dense(op) => op.qubits(),
            Gate::Rotation(r) => r.qubits(),
            Gate::PauliConj { idx, .. } => idx.qubits(),
            Gate::Identity(n) => *n,
        }
    }

    pub fn apply(&self, v: &mut Vec<f64>) {
        match self {
            Gate::Dense(op) => *v = op.apply_vec(v),
            Gate::Rotation(r) => r.apply(v),
            Gate::PauliConj { signs, .. } => {
                for (x, s) in v.iter_mut().zip(signs) {
                    *x *= s;
                }
            }
            Gate::Identity(_) => {}
        }
    }

    /// `A <- G A G^T`.
    pub fn conjugate_moment(&self, a: &mut Mat) {
        match self {
            Gate::Dense(op) => {
                *a = op.mat().matmul(a).matmul(&op.mat().transpose());
            }
            Gate::Rotation(r) => r.conjugate_moment(a),
            Gate::PauliConj { signs, .. } => {
                let d = a.dim();
                for r in 0..d {
                    for c in 0..d {
                        let s = signs[r] * signs[c];
                        if s < 0.0 {
                            a.set(r, c, -a.get(r, c));
                        }
                    }
                }
            }
            Gate::Identity(_) => {}
        }
    }

    pub fn to_ptm(&self) -> PtmOperator {
        match self {
            Gate::Dense(op) => op.clone(),
            Gate::Rotation(r) => r.to_ptm(),
            Gate::PauliConj { idx, signs } => {
                let d = dim4(idx.qubits());
                let mut m = Mat::zeros(d);
                for i in 0..d {
                    m.set(i, i, signs[i]);
                }
                PtmOperator::new(idx.qubits(), m).expect("consistent dims")
            }
            Gate::Identity(n) => PtmOperator::identity(*n),
        }
    }
}

/// One circuit step: a gate, then its noise channels in order.
#[derive(Clone, Debug)]
pub struct CircuitStep {
    pub gate: Gate,
    pub noise: Vec<Channel>,
}

impl CircuitStep {
    pub fn noiseless(gate: Gate) -> Self {
        CircuitStep { gate, noise: Vec::new() }
    }

    pub fn noisy(gate: Gate, noise: Channel) -> Self {
        CircuitStep { gate, noise: vec![noise] }
    }
}

/// Input state, observable, and gate/noise sequence.
#[derive(Clone, Debug)]
pub struct Circuit {
    n: usize,
    input: PtmState,
    observable: Observable,
    steps: Vec<CircuitStep>,
}

impl Circuit {
    pub fn new(input: PtmState, observable: Observable, steps: Vec<CircuitStep>) -> Result<Self> {
        let n = input.qubits();
        if observable.qubits() != n {
            return Err(Error::DimensionMismatch("observable qubit mismatch".into()));
        }
        for (k, step) in steps.iter().enumerate() {
            if step.gate.qubits() != n {
                return Err(Error::DimensionMismatch(format!("gate {k} qubit mismatch")));
            }
            for ch in &step.noise {
                if ch.qubits() != n {
                    return Err(Error::DimensionMismatch(format!("noise {k} qubit mismatch")));
                }
            }
        }
        Ok(Circuit { n, input, observable, steps })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn input(&self) -> &PtmState {
        &self.input
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn steps(&self) -> &[CircuitStep] {
        &self.steps
    }

    pub fn gate_count(&self) -> usize {
        self.steps.len()
    }

    pub fn noise_channel_count(&self) -> usize {
        self.steps.iter().map(|s| s.noise.len()).sum()
    }

    /// The circuit truncated to its first `k` steps.
    pub fn prefix(&self, k: usize) -> Circuit {
        Circuit {
            n: self.n,
            input: self.input.clone(),
            observable: self.observable.clone(),
            steps: self.steps[..k.min(self.steps.len())].to_vec(),
        }
    }
}

/// The same gate and noise repeated `count` times.
pub fn repeated_gate_circuit(
    gate: Gate,
    noise: Option<Channel>,
    count: usize,
    input: PtmState,
    observable: Observable,
) -> Result<Circuit> {
    let steps = (0..count)
        .map(|_| CircuitStep {
            gate: gate.clone(),
            noise: noise.iter().cloned().collect(),
        })
        .collect();
    Circuit::new(input, observable, steps)
}

/// Estimator variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Noiseless,
    Noisy,
    ExactQem,
    McEmpirical,
    McConcat,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Noiseless => "noiseless",
            Mode::Noisy => "noisy",
            Mode::ExactQem => "exact_qem",
            Mode::McEmpirical => "mc_empirical",
            Mode::McConcat => "mc_concat",
        }
    }
}

/// One estimate with its provenance.
#[derive(Clone, Debug)]
pub struct EstimateRecord {
    pub value: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Operation draws consumed (0 for the deterministic modes).
    pub samples_used: u64,
}

/// Noiseless expectation value (gates only).
pub fn run_noiseless(c: &Circuit) -> f64 {
    let mut v = c.input.coeffs().to_vec();
    for step in &c.steps {
        step.gate.apply(&mut v);
    }
    dot(c.observable.coeffs(), &v)
}

/// Noisy expectation value (gates and channels, no mitigation).
pub fn run_noisy(c: &Circuit) -> f64 {
    let mut v = c.input.coeffs().to_vec();
    for step in &c.steps {
        step.gate.apply(&mut v);
        for ch in &step.noise {
            ch.apply_in_place(&mut v);
        }
    }
    dot(c.observable.coeffs(), &v)
}

/// Applies the exact channel inverse after every noisy gate. Recovers the
/// noiseless value up to rounding.
pub fn run_exact_qem(c: &Circuit) -> Result<f64> {
    let mut v = c.input.coeffs().to_vec();
    for step in &c.steps {
        step.gate.apply(&mut v);
        for ch in &step.noise {
            ch.apply_in_place(&mut v);
            match ch {
                Channel::Pauli(p) => {
                    for (i, &cdiag) in p.diag().iter().enumerate() {
                        if cdiag.abs() < 1e-12 {
                            return Err(Error::NotInvertible { index: i, value: cdiag });
                        }
                        v[i] /= cdiag;
                    }
                }
                Channel::General(g) => {
                    let inv = g.ptm().mat().inverse().ok_or(Error::SingularChannel)?;
                    v = inv.matvec(&v);
                }
            }
        }
    }
    Ok(dot(c.observable.coeffs(), &v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Splitmix64 step, used to derive independent RNG streams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by a master seed and a path of identifiers (for
/// example `[trial, gate]`). Streams for different paths are independent,
/// and the construction is stable across platforms and thread counts.
pub fn derive_rng(master: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = master ^ 0xA076_1D64_78BD_642F;
    let mut acc = splitmix64(&mut state);
    for &id in ids {
        state ^= id.wrapping_mul(0xE703_7ED1_A0B4_28DB);
        acc ^= splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    state ^= acc;
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    use rand::SeedableRng;
    ChaCha8Rng::from_seed(seed)
}

enum PreparedKind {
    Pauli {
        diag: Vec<f64>,
        /// Walsh column per support operation.
        support_cols: Vec<Vec<f64>>,
        /// `c .* w_l` per support operation (concat fast path).
        concat_diags: Vec<Vec<f64>>,
    },
    General {
        c_mat: Mat,
        support_ops: Vec<Mat>,
        /// `O_l * C` per support operation (concat fast path).
        support_ops_after_c: Vec<Mat>,
    },
}

struct PreparedChannel {
    kind: PreparedKind,
    decomp: QuasiProbDecomposition,
    /// Empirical draw count `N_k` at the prepared `Ns`.
    draws: u64,
    /// Sampling probabilities over the support slots.
    support_probs: Vec<f64>,
    support_signs: Vec<f64>,
}

enum PreparedAction {
    Gate(Gate),
    Noise(Arc<PreparedChannel>),
}

/// A circuit with every noise channel inverted and the per-gate sampling
/// tables laid out, ready to run many Monte Carlo trials.
pub struct PreparedQem {
    n: usize,
    input: Vec<f64>,
    obs: Vec<f64>,
    actions: Vec<PreparedAction>,
    ns: u64,
    norm1_prod: f64,
    /// Whole-circuit sample count for the concat estimator.
    concat_samples: u64,
    /// Total per-gate draws for the empirical estimator.
    empirical_samples: u64,
    master_seed: u64,
}

impl PreparedQem {
    pub fn new(c: &Circuit, ns: u64, master_seed: u64) -> Result<Self> {
        let n = c.n;
        let mut actions = Vec::new();
        let mut cache: HashMap<Vec<u64>, Arc<PreparedChannel>> = HashMap::new();
        let mut norm1_prod = 1.0f64;
        let mut overhead_prod = 1.0f64;
        let mut empirical_samples = 0u64;
        for step in &c.steps {
            actions.push(PreparedAction::Gate(step.gate.clone()));
            for ch in &step.noise {
                let key = channel_key(ch);
                let prepared = match cache.get(&key) {
                    Some(p) => Arc::clone(p),
                    None => {
                        let p = Arc::new(prepare_channel(ch, ns)?);
                        cache.insert(key, Arc::clone(&p));
                        p
                    }
                };
                norm1_prod *= prepared.decomp.norm1();
                overhead_prod *= prepared.decomp.sampling_overhead_factor();
                empirical_samples += prepared.draws;
                actions.push(PreparedAction::Noise(prepared));
            }
        }
        if !overhead_prod.is_finite() {
            return Err(Error::Overflow("circuit sampling overhead".into()));
        }
        let concat_samples = ((ns as f64 * overhead_prod).round() as u64).max(1);
        Ok(PreparedQem {
            n,
            input: c.input.coeffs().to_vec(),
            obs: c.observable.coeffs().to_vec(),
            actions,
            ns,
            norm1_prod,
            concat_samples,
            empirical_samples,
            master_seed,
        })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn ns(&self) -> u64 {
        self.ns
    }

    pub fn concat_samples(&self) -> u64 {
        self.concat_samples
    }

    pub fn empirical_samples(&self) -> u64 {
        self.empirical_samples
    }

    pub fn norm1_product(&self) -> f64 {
        self.norm1_prod
    }

    pub fn overhead_product(&self) -> f64 {
        self.norm1_prod * self.norm1_prod
    }

    /// One trial of the per-gate empirical estimator.
    pub fn estimate_empirical(&self, trial: u64) -> f64 {
        let dim = dim4(self.n);
        let mut v = self.input.clone();
        let mut t = vec![0.0f64; dim];
        for (aidx, action) in self.actions.iter().enumerate() {
            match action {
                PreparedAction::Gate(g) => g.apply(&mut v),
                PreparedAction::Noise(pc) => {
                    let mut rng = derive_rng(self.master_seed, &[trial, aidx as u64]);
                    let emp = draw_empirical_exact(&pc.decomp, pc.draws, &mut rng);
                    match &pc.kind {
                        PreparedKind::Pauli { diag, support_cols, .. } => {
                            t.iter_mut().for_each(|x| *x = 0.0);
                            for (slot, &a) in emp.alpha_tilde().iter().enumerate() {
                                if a == 0.0 {
                                    continue;
                                }
                                for (ti, w) in t.iter_mut().zip(&support_cols[slot]) {
                                    *ti += a * w;
                                }
                            }
                            for i in 0..dim {
                                v[i] *= diag[i] * t[i];
                            }
                        }
                        PreparedKind::General { c_mat, support_ops, .. } => {
                            v = c_mat.matvec(&v);
                            let mut gamma = Mat::zeros(dim);
                            for (slot, &a) in emp.alpha_tilde().iter().enumerate() {
                                if a == 0.0 {
                                    continue;
                                }
                                for k in 0..dim * dim {
                                    gamma.data_mut()[k] += a * support_ops[slot].data()[k];
                                }
                            }
                            v = gamma.matvec(&v);
                        }
                    }
                }
            }
        }
        dot(&self.obs, &v)
    }

    /// One trial of the concatenated whole-circuit sampler.
    pub fn estimate_concat(&self, trial: u64) -> f64 {
        const BATCH: usize = 64;
        let dim = dim4(self.n);
        let total = self.concat_samples as usize;
        // Per-action RNGs persist across batches so the draw sequence is a
        // pure function of (master_seed, trial, action).
        let mut rngs: Vec<Option<ChaCha8Rng>> = self
            .actions
            .iter()
            .enumerate()
            .map(|(aidx, a)| match a {
                PreparedAction::Noise(_) => {
                    Some(derive_rng(self.master_seed, &[trial, aidx as u64]))
                }
                PreparedAction::Gate(_) => None,
            })
            .collect();
        let mut acc = 0.0f64;
        let mut comp = 0.0f64; // Neumaier compensation
        let mut batch = vec![0.0f64; dim * BATCH];
        let mut scratch = vec![0.0f64; dim * BATCH];
        let mut signs = vec![1.0f64; BATCH];
        let mut lsel = vec![0usize; BATCH];
        let mut done = 0usize;
        while done < total {
            let b = BATCH.min(total - done);
            for (i, &x) in self.input.iter().enumerate() {
                for s in 0..b {
                    batch[i * BATCH + s] = x;
                }
            }
            signs[..b].iter_mut().for_each(|s| *s = 1.0);
            for (aidx, action) in self.actions.iter().enumerate() {
                match action {
                    PreparedAction::Gate(g) => {
                        apply_gate_batch(g, &mut batch, &mut scratch, BATCH, b, dim)
                    }
                    PreparedAction::Noise(pc) => {
                        let rng = rngs[aidx].as_mut().expect("noise actions own an rng");
                        for s in 0..b {
                            let slot = sample_slot(&pc.support_probs, rng);
                            lsel[s] = slot;
                            signs[s] *= pc.support_signs[slot];
                        }
                        match &pc.kind {
                            PreparedKind::Pauli { concat_diags, .. } => {
                                for i in 0..dim {
                                    let row = &mut batch[i * BATCH..i * BATCH + b];
                                    for (s, x) in row.iter_mut().enumerate() {
                                        *x *= concat_diags[lsel[s]][i];
                                    }
                                }
                            }
                            PreparedKind::General { support_ops_after_c, .. } => {
                                for s in 0..b {
                                    let mut col = vec![0.0f64; dim];
                                    for (i, ci) in col.iter_mut().enumerate() {
                                        *ci = batch[i * BATCH + s];
                                    }
                                    let out = support_ops_after_c[lsel[s]].matvec(&col);
                                    for (i, &oi) in out.iter().enumerate() {
                                        batch[i * BATCH + s] = oi;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for s in 0..b {
                let mut r = 0.0;
                for (i, &o) in self.obs.iter().enumerate() {
                    if o != 0.0 {
                        r += o * batch[i * BATCH + s];
                    }
                }
                let term = signs[s] * r;
                // Neumaier summation keeps the reduction order-exact.
                let t = acc + term;
                if acc.abs() >= term.abs() {
                    comp += (acc - t) + term;
                } else {
                    comp += (term - t) + acc;
                }
                acc = t;
            }
            done += b;
        }
        (self.norm1_prod / total as f64) * (acc + comp)
    }
}

fn channel_key(ch: &Channel) -> Vec<u64> {
    let mut key = Vec::new();
    match ch {
        Channel::Pauli(p) => {
            key.push(0);
            key.extend(p.diag().iter().map(|x| x.to_bits()));
        }
        Channel::General(g) => {
            key.push(1);
            key.extend(g.ptm().mat().data().iter().map(|x| x.to_bits()));
        }
    }
    key
}

fn prepare_channel(ch: &Channel, ns: u64) -> Result<PreparedChannel> {
    match ch {
        Channel::Pauli(p) => {
            let n = p.qubits();
            let decomp = invert_pauli(p)?;
            let draws = empirical_draw_count(&decomp, ns);
            let support_cols: Vec<Vec<f64>> =
                decomp.support().iter().map(|&l| walsh_column(l, n)).collect();
            let concat_diags: Vec<Vec<f64>> = support_cols
                .iter()
                .map(|col| col.iter().zip(p.diag()).map(|(w, c)| w * c).collect())
                .collect();
            let support_probs: Vec<f64> =
                decomp.support().iter().map(|&l| decomp.sampling_probs()[l]).collect();
            let support_signs: Vec<f64> =
                decomp.support().iter().map(|&l| decomp.signs()[l]).collect();
            Ok(PreparedChannel {
                kind: PreparedKind::Pauli {
                    diag: p.diag().to_vec(),
                    support_cols,
                    concat_diags,
                },
                decomp,
                draws,
                support_probs,
                support_signs,
            })
        }
        Channel::General(g) => {
            if g.qubits() != 1 {
                return Err(Error::DimensionMismatch(
                    "general-channel mitigation is wired for one qubit (no default basis beyond)"
                        .into(),
                ));
            }
            let basis = default_single_qubit_basis();
            let decomp = invert_general(g, &basis)?;
            let draws = empirical_draw_count(&decomp, ns);
            let support_ops: Vec<Mat> = decomp
                .support()
                .iter()
                .map(|&l| basis[l].mat().clone())
                .collect();
            let support_ops_after_c: Vec<Mat> =
                support_ops.iter().map(|op| op.matmul(g.ptm().mat())).collect();
            let support_probs: Vec<f64> =
                decomp.support().iter().map(|&l| decomp.sampling_probs()[l]).collect();
            let support_signs: Vec<f64> =
                decomp.support().iter().map(|&l| decomp.signs()[l]).collect();
            Ok(PreparedChannel {
                kind: PreparedKind::General {
                    c_mat: g.ptm().mat().clone(),
                    support_ops,
                    support_ops_after_c,
                },
                decomp,
                draws,
                support_probs,
                support_signs,
            })
        }
    }
}

fn sample_slot<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for (slot, &p) in probs.iter().enumerate() {
        cdf += p;
        if u < cdf {
            return slot;
        }
    }
    probs.len() - 1
}

fn apply_gate_batch(
    g: &Gate,
    batch: &mut [f64],
    scratch: &mut [f64],
    stride: usize,
    b: usize,
    dim: usize,
) {
    match g {
        Gate::Identity(_) => {}
        Gate::PauliConj { signs, .. } => {
            for (i, &s) in signs.iter().enumerate() {
                if s < 0.0 {
                    for x in &mut batch[i * stride..i * stride + b] {
                        *x = -*x;
                    }
                }
            }
        }
        Gate::Rotation(r) => {
            let (c, s) = (r.theta().cos(), r.theta().sin());
            for &(j, m, sigma) in r.pairs() {
                let (j, m) = (j as usize, m as usize);
                let (lo, hi) = batch.split_at_mut(m * stride);
                let rj = &mut lo[j * stride..j * stride + b];
                let rm = &mut hi[..b];
                for (xj, xm) in rj.iter_mut().zip(rm.iter_mut()) {
                    let vj = *xj;
                    let vm = *xm;
                    *xj = c * vj - sigma * s * vm;
                    *xm = sigma * s * vj + c * vm;
                }
            }
        }
        Gate::Dense(op) => {
            let m = op.mat();
            scratch[..dim * stride].copy_from_slice(&batch[..dim * stride]);
            for i in 0..dim {
                let row = m.row(i);
                let out = &mut batch[i * stride..i * stride + b];
                out.iter_mut().for_each(|x| *x = 0.0);
                for (k, &g_ik) in row.iter().enumerate() {
                    if g_ik == 0.0 {
                        continue;
                    }
                    let src = &scratch[k * stride..k * stride + b];
                    for (o, &x) in out.iter_mut().zip(src) {
                        *o += g_ik * x;
                    }
                }
            }
        }
    }
}

/// Single-trial convenience wrapper for the empirical estimator.
pub fn run_mc_qem_empirical(c: &Circuit, ns: u64, seed: u64) -> Result<EstimateRecord> {
    let prep = PreparedQem::new(c, ns, seed)?;
    Ok(EstimateRecord {
        value: prep.estimate_empirical(0),
        mode: Mode::McEmpirical,
        seed,
        samples_used: prep.empirical_samples(),
    })
}

/// Single-trial convenience wrapper for the concatenated estimator.
pub fn run_mc_qem_concat(c: &Circuit, ns: u64, seed: u64) -> Result<EstimateRecord> {
    let prep = PreparedQem::new(c, ns, seed)?;
    Ok(EstimateRecord {
        value: prep.estimate_concat(0),
        mode: Mode::McConcat,
        seed,
        samples_used: prep.concat_samples(),
    })
}

/// Running first and second moments of the empirical-mode estimator state.
///
/// `mu` is the mean propagated vector, `a` the second-moment matrix
/// `E[v v^T]`; after the full circuit the estimator RMSE about the noiseless
/// value is `sqrt(o^T a o - (o^T mu)^2)` with the mean equal to the
/// noiseless value (the estimator is unbiased).
pub struct MomentRecursion {
    n: usize,
    mu: Vec<f64>,
    a: Mat,
    steps_applied: usize,
}

impl MomentRecursion {
    pub fn new(input: &PtmState) -> Self {
        let v = input.coeffs().to_vec();
        let d = v.len();
        let mut a = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                a.set(i, j, v[i] * v[j]);
            }
        }
        MomentRecursion { n: input.qubits(), mu: v, a, steps_applied: 0 }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn steps_applied(&self) -> usize {
        self.steps_applied
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn second_moment(&self) -> &Mat {
        &self.a
    }

    pub fn step_gate(&mut self, gate: &Gate) {
        gate.apply(&mut self.mu);
        gate.conjugate_moment(&mut self.a);
        self.steps_applied += 1;
    }

    /// Mitigated Pauli noise: `A <- E{c~ c~^T} .* A`, `mu <- E{c~} .* mu`.
    pub fn step_noise_pauli(&mut self, second_moment: &Mat, mean_residual: &[f64]) {
        let d = self.a.dim();
        for i in 0..d {
            for j in 0..d {
                self.a.set(i, j, self.a.get(i, j) * second_moment.get(i, j));
            }
        }
        for (m, r) in self.mu.iter_mut().zip(mean_residual) {
            *m *= r;
        }
        self.a.symmetrize();
    }

    /// Mitigated general noise over an explicit (or Pauli-gate) basis:
    /// `A <- sum_lm E[a~_l a~_m] O_l (C A C^T) O_m^T`.
    pub fn step_noise_general(
        &mut self,
        c_mat: &Mat,
        decomp: &QuasiProbDecomposition,
        draws: u64,
    ) -> Result<()> {
        let e_alpha = crate::quasiprob::empirical_second_moment(decomp, draws);
        let ops = basis_op_mats(decomp.basis())?;
        let mid = c_mat.matmul(&self.a).matmul(&c_mat.transpose());
        let d = self.a.dim();
        let mut out = Mat::zeros(d);
        for &l in decomp.support() {
            let left = ops[l].matmul(&mid);
            for &m in decomp.support() {
                let w = e_alpha.get(l, m);
                if w == 0.0 {
                    continue;
                }
                let term = left.matmul(&ops[m].transpose());
                for k in 0..d * d {
                    out.data_mut()[k] += w * term.data()[k];
                }
            }
        }
        self.a = out;
        self.a.symmetrize();
        // Mean picks up Gamma_bar C = (sum alpha O) C, identity up to rounding.
        let gbar = decomp.reconstruct_ptm();
        self.mu = gbar.mat().matvec(&c_mat.matvec(&self.mu));
        Ok(())
    }

    /// Estimator mean for an observable.
    pub fn mean_estimate(&self, obs: &Observable) -> f64 {
        dot(obs.coeffs(), &self.mu)
    }

    /// Predicted RMSE of the empirical-mode estimator about its mean.
    pub fn rmse(&self, obs: &Observable) -> f64 {
        let o = obs.coeffs();
        let ao = self.a.matvec(o);
        let second = dot(o, &ao);
        let mean = dot(o, &self.mu);
        (second - mean * mean).max(0.0).sqrt()
    }
}

fn basis_op_mats(basis: &OperationBasis) -> Result<Vec<Mat>> {
    match basis {
        OperationBasis::Explicit { ops } => Ok(ops.iter().map(|o| o.mat().clone()).collect()),
        OperationBasis::PauliGates { n } => {
            let d = dim4(*n);
            Ok((0..d)
                .map(|l| {
                    let col = walsh_column(l, *n);
                    let mut m = Mat::zeros(d);
                    for (i, &s) in col.iter().enumerate() {
                        m.set(i, i, s);
                    }
                    m
                })
                .collect())
        }
    }
}

/// Second-moment matrix `E{c~ c~^T} = 1 1^T + Xi` and mean residual for one
/// Pauli channel at sample budget `ns`.
pub fn pauli_noise_moment(ch: &PauliChannel, ns: u64) -> Result<(Mat, Vec<f64>)> {
    let decomp = invert_pauli(ch)?;
    let draws = empirical_draw_count(&decomp, ns);
    let mut e = residual_covariance_exact(&decomp, ch, draws)?;
    let d = e.dim();
    for i in 0..d {
        for j in 0..d {
            e.set(i, j, e.get(i, j) + 1.0);
        }
    }
    // Mean residual diagonal (W alpha) .* c, the all-ones vector up to rounding.
    let n = ch.qubits();
    let mut walpha = decomp.alpha().to_vec();
    crate::pauli::walsh_apply(&mut walpha, n);
    let mean: Vec<f64> = walpha.iter().zip(ch.diag()).map(|(a, c)| a * c).collect();
    Ok((e, mean))
}

/// Runs the exact second-moment recursion for the empirical estimator over a
/// circuit of Pauli channels, invoking `after_step(step_index, &recursion)`
/// after each circuit step.
pub fn run_moment_recursion_pauli_with<F>(
    c: &Circuit,
    ns: u64,
    mut after_step: F,
) -> Result<MomentRecursion>
where
    F: FnMut(usize, &MomentRecursion),
{
    let mut rec = MomentRecursion::new(&c.input);
    let mut cache: HashMap<Vec<u64>, (Mat, Vec<f64>)> = HashMap::new();
    for (k, step) in c.steps.iter().enumerate() {
        rec.step_gate(&step.gate);
        for ch in &step.noise {
            let p = ch.as_pauli().ok_or(Error::NotAPauliChannel)?;
            let key = channel_key(ch);
            if !cache.contains_key(&key) {
                cache.insert(key.clone(), pauli_noise_moment(p, ns)?);
            }
            let (e, mean) = cache.get(&key).expect("inserted above");
            rec.step_noise_pauli(e, mean);
        }
        after_step(k, &rec);
    }
    Ok(rec)
}

/// [`run_moment_recursion_pauli_with`] without the per-step callback.
pub fn run_moment_recursion_pauli(c: &Circuit, ns: u64) -> Result<MomentRecursion> {
    run_moment_recursion_pauli_with(c, ns, |_, _| {})
}

/// General-basis second-moment recursion. `decomps` must hold one
/// decomposition per noise channel occurrence, in circuit order.
pub fn run_moment_recursion_general(
    c: &Circuit,
    ns: u64,
    decomps: &[QuasiProbDecomposition],
) -> Result<MomentRecursion> {
    if decomps.len() != c.noise_channel_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} decompositions for {} noise channels",
            decomps.len(),
            c.noise_channel_count()
        )));
    }
    let mut rec = MomentRecursion::new(&c.input);
    let mut next = 0usize;
    for step in &c.steps {
        rec.step_gate(&step.gate);
        for ch in &step.noise {
            let d = &decomps[next];
            next += 1;
            let draws = empirical_draw_count(d, ns);
            let c_mat = ch.to_ptm().mat().clone();
            rec.step_noise_general(&c_mat, d, draws)?;
        }
    }
    Ok(rec)
}

/// Single-shot readout variance of the PTM estimator when each Pauli term is
/// measured independently: `sum_i o_i^2 (2^-n - v_i^2)`.
///
/// Zero exactly when the state is a definite eigenstate of every measured
/// term; at most 1 for observables with spectrum in [-1, 1].
pub fn intrinsic_variance(obs: &Observable, state: &PtmState) -> Result<f64> {
    if obs.qubits() != state.qubits() {
        return Err(Error::DimensionMismatch("observable/state qubit mismatch".into()));
    }
    let inv_d = 1.0 / crate::pauli::dim2(state.qubits()) as f64;
    let var: f64 = obs
        .coeffs()
        .iter()
        .zip(state.coeffs())
        .map(|(o, v)| o * o * (inv_d - v * v))
        .sum();
    Ok(var.max(0.0))
}

/// Mean readout and RMSE of an unmitigated finite-shot run: bias from the
/// noisy circuit plus intrinsic variance shrunk by the shot count.
pub fn noisy_mse(c: &Circuit, ns: u64) -> Result<(f64, f64)> {
    let mut v = c.input.coeffs().to_vec();
    for step in &c.steps {
        step.gate.apply(&mut v);
        for ch in &step.noise {
            ch.apply_in_place(&mut v);
        }
    }
    let state = PtmState::new(c.n, v)?;
    let mean = expectation(&c.observable, &state);
    let ideal = run_noiseless(c);
    let var = intrinsic_variance(&c.observable, &state)?;
    let mse = (mean - ideal).powi(2) + var / ns as f64;
    Ok((mean, mse.sqrt()))
}
