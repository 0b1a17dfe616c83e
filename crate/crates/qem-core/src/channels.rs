//! Noise channels in the PTM picture.
//!
//! Pauli channels are diagonal PTMs and get a dedicated representation: the
//! probability vector `p` over Pauli strings and the diagonal `c = W p`
//! (Walsh transform of the probabilities) are kept together. Everything else
//! is a [`GeneralChannel`], a full PTM checked for trace preservation and
//! necessary physicality conditions at construction.

use crate::mat::Mat;
use crate::pauli::{digit, dim4, walsh_apply, PtmOperator, PtmState};
use crate::{Error, Result};

/// Stochastic Pauli channel `rho -> sum_k p_k S_k rho S_k`.
///
/// Invariants: probabilities are nonnegative and sum to 1 within 1e-12, the
/// diagonal is the Walsh transform of the probabilities, and `diag[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliChannel {
    n: usize,
    probs: Vec<f64>,
    diag: Vec<f64>,
}

impl PauliChannel {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != dim4(n) {
            return Err(Error::DimensionMismatch(format!(
                "probability vector length {} != 4^{}",
                probs.len(),
                n
            )));
        }
        let mut probs = probs;
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            if *p < 0.0 {
                if *p < -1e-12 {
                    return Err(Error::BadProbabilities(*p));
                }
                *p = 0.0;
            }
            sum += *p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::BadProbabilities(sum - 1.0));
        }
        let mut diag = probs.clone();
        walsh_apply(&mut diag, n);
        diag[0] = 1.0;
        Ok(PauliChannel { n, probs, diag })
    }

    /// Builds from the PTM diagonal; the implied probabilities must be valid.
    pub fn from_diag(n: usize, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != dim4(n) {
            return Err(Error::DimensionMismatch(format!(
                "diagonal length {} != 4^{}",
                diag.len(),
                n
            )));
        }
        let mut probs = diag.clone();
        walsh_apply(&mut probs, n);
        let scale = 1.0 / dim4(n) as f64;
        for p in probs.iter_mut() {
            *p *= scale;
        }
        PauliChannel::new(n, probs)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Embeds a single-qubit channel into `n` qubits on `qubit`.
    pub fn lift(&self, qubit: usize, n: usize) -> Result<PauliChannel> {
        if self.n != 1 {
            return Err(Error::DimensionMismatch(
                "lift expects a single-qubit channel".into(),
            ));
        }
        if qubit >= n {
            return Err(Error::ParamRange(format!("qubit {qubit} out of range for n={n}")));
        }
        let d = dim4(n);
        let mut probs = vec![0.0; d];
        let mut diag = vec![0.0; d];
        for a in 0..4 {
            probs[a << (2 * qubit)] = self.probs[a];
        }
        for (i, v) in diag.iter_mut().enumerate() {
            *v = self.diag[digit(i, qubit)];
        }
        Ok(PauliChannel { n, probs, diag })
    }

    /// Composition (`other` after `self`); diagonals multiply entrywise.
    pub fn compose(&self, other: &PauliChannel) -> Result<PauliChannel> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("channel qubit mismatch".into()));
        }
        let diag: Vec<f64> = self
            .diag
            .iter()
            .zip(&other.diag)
            .map(|(a, b)| a * b)
            .collect();
        PauliChannel::from_diag(self.n, diag)
    }

    pub fn apply_in_place(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.diag.len());
        for (x, c) in v.iter_mut().zip(&self.diag) {
            *x *= c;
        }
    }

    pub fn to_ptm(&self) -> PtmOperator {
        let d = dim4(self.n);
        let mut m = Mat::zeros(d);
        for i in 0..d {
            m.set(i, i, self.diag[i]);
        }
        PtmOperator::new(self.n, m).expect("diagonal PTM has consistent dims")
    }
}

/// Depolarizing channel: identity with probability `1 - eps`, otherwise a
/// uniformly random X/Y/Z error. Valid for `0 <= eps < 3/4` (the PTM diagonal
/// `1 - 4 eps / 3` must stay positive for quasi-probability inversion).
pub fn depolarizing(eps: f64) -> Result<PauliChannel> {
    if !(0.0..0.75).contains(&eps) {
        return Err(Error::ParamRange(format!(
            "depolarizing strength {eps} outside [0, 0.75)"
        )));
    }
    PauliChannel::new(1, vec![1.0 - eps, eps / 3.0, eps / 3.0, eps / 3.0])
}

/// Arbitrary trace-preserving channel stored as its PTM.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralChannel {
    ptm: PtmOperator,
}

impl GeneralChannel {
    /// Wraps a PTM after checking trace preservation (first row `e_0`, within
    /// 1e-9) and two necessary contractivity conditions: every entry has
    /// magnitude at most 1 (trace-norm contraction pairs each entry with a
    /// unit-trace-norm operator), and for one qubit the 3x3 traceless block
    /// has largest singular value at most 1 (distortion-matrix condition).
    ///
    /// The full PTM of a non-unital channel can have norm slightly above 1
    /// (amplitude damping reaches `1 + O(gamma)`), so the whole-matrix norm
    /// is deliberately not checked.
    pub fn new(ptm: PtmOperator) -> Result<Self> {
        let tp = ptm.trace_preservation_residual();
        if tp > 1e-9 {
            return Err(Error::NotTracePreserving(tp));
        }
        for &x in ptm.mat().data() {
            if x.abs() > 1.0 + 1e-9 {
                return Err(Error::NotContractive(x.abs()));
            }
        }
        if ptm.qubits() == 1 {
            let m = ptm.mat();
            let mut block = Mat::zeros(3);
            for r in 1..4 {
                for c in 1..4 {
                    block.set(r - 1, c - 1, m.get(r, c));
                }
            }
            let smax = block.max_singular_value();
            if smax > 1.0 + 1e-9 {
                return Err(Error::NotContractive(smax));
            }
        }
        Ok(GeneralChannel { ptm })
    }

    pub fn qubits(&self) -> usize {
        self.ptm.qubits()
    }

    pub fn ptm(&self) -> &PtmOperator {
        &self.ptm
    }

    pub fn apply_in_place(&self, v: &mut Vec<f64>) {
        *v = self.ptm.apply_vec(v);
    }

    /// Embeds a single-qubit channel into `n` qubits on `qubit`.
    pub fn lift(&self, qubit: usize, n: usize) -> Result<GeneralChannel> {
        if self.ptm.qubits() != 1 {
            return Err(Error::DimensionMismatch(
                "lift expects a single-qubit channel".into(),
            ));
        }
        if qubit >= n {
            return Err(Error::ParamRange(format!("qubit {qubit} out of range for n={n}")));
        }
        let d = dim4(n);
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                // Identity on every other digit.
                if (i & !(3 << (2 * qubit))) != (j & !(3 << (2 * qubit))) {
                    continue;
                }
                m.set(i, j, self.ptm.mat().get(digit(i, qubit), digit(j, qubit)));
            }
        }
        GeneralChannel::new(PtmOperator::new(n, m)?)
    }
}

/// Amplitude damping with decay probability `gamma` in [0, 1].
pub fn amplitude_damping(gamma: f64) -> Result<GeneralChannel> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ParamRange(format!("damping gamma {gamma} outside [0, 1]")));
    }
    let s = (1.0 - gamma).sqrt();
    let mat = Mat::from_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, s, 0.0, 0.0],
        &[0.0, 0.0, s, 0.0],
        &[gamma, 0.0, 0.0, 1.0 - gamma],
    ]);
    GeneralChannel::new(PtmOperator::new(1, mat)?)
}

/// Either kind of channel, as placed after a gate in a circuit.
#[derive(Clone, Debug, PartialEq)]
pub enum Channel {
    Pauli(PauliChannel),
    General(GeneralChannel),
}

impl Channel {
    pub fn qubits(&self) -> usize {
        match self {
            Channel::Pauli(c) => c.qubits(),
            Channel::General(c) => c.qubits(),
        }
    }

    pub fn apply_in_place(&self, v: &mut Vec<f64>) {
        match self {
            Channel::Pauli(c) => c.apply_in_place(v),
            Channel::General(c) => c.apply_in_place(v),
        }
    }

    pub fn to_ptm(&self) -> PtmOperator {
        match self {
            Channel::Pauli(c) => c.to_ptm(),
            Channel::General(c) => c.ptm().clone(),
        }
    }

    pub fn as_pauli(&self) -> Option<&PauliChannel> {
        match self {
            Channel::Pauli(c) => Some(c),
            Channel::General(_) => None,
        }
    }
}

impl From<PauliChannel> for Channel {
    fn from(c: PauliChannel) -> Self {
        Channel::Pauli(c)
    }
}

impl From<GeneralChannel> for Channel {
    fn from(c: GeneralChannel) -> Self {
        Channel::General(c)
    }
}

/// Probability that the channel corrupts a gate: `1 - 4^(-n) Tr(PTM)`.
///
/// For a Pauli channel this is exactly the probability of a non-identity
/// error; for depolarizing(eps) it equals eps.
pub fn gate_error_probability(ch: &Channel) -> f64 {
    let n = ch.qubits();
    let tr = match ch {
        Channel::Pauli(c) => c.diag().iter().sum::<f64>(),
        Channel::General(c) => {
            let m = c.ptm().mat();
            (0..m.dim()).map(|i| m.get(i, i)).sum::<f64>()
        }
    };
    1.0 - tr / dim4(n) as f64
}

/// Applies a gate followed by its noise channel to a physical state.
pub fn apply_noisy_gate(gate: &PtmOperator, noise: &Channel, state: &PtmState) -> Result<PtmState> {
    if gate.qubits() != state.qubits() || noise.qubits() != state.qubits() {
        return Err(Error::DimensionMismatch(
            "gate/noise/state qubit mismatch".into(),
        ));
    }
    let mut v = gate.apply_vec(state.coeffs());
    noise.apply_in_place(&mut v);
    PtmState::new(state.qubits(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::unitary_to_ptm;
    use crate::CMat;
    use num_complex::Complex64;

    #[test]
    fn depolarizing_frozen_values() {
        let eps = 1e-3;
        let ch = depolarizing(eps).unwrap();
        assert_eq!(ch.probs(), &[1.0 - eps, eps / 3.0, eps / 3.0, eps / 3.0]);
        let c1 = 1.0 - 4.0 * eps / 3.0;
        assert_eq!(ch.diag()[0], 1.0);
        for k in 1..4 {
            assert!((ch.diag()[k] - c1).abs() < 1e-15);
        }
        assert!(depolarizing(0.75).is_err());
        assert!(depolarizing(-0.1).is_err());
    }

    #[test]
    fn probability_validation() {
        assert!(matches!(
            PauliChannel::new(1, vec![0.5, 0.5, 0.5, -0.5]),
            Err(Error::BadProbabilities(_))
        ));
        assert!(matches!(
            PauliChannel::new(1, vec![0.5, 0.1, 0.1, 0.1]),
            Err(Error::BadProbabilities(_))
        ));
    }

    #[test]
    fn diag_roundtrip() {
        let ch = depolarizing(0.05).unwrap();
        let back = PauliChannel::from_diag(1, ch.diag().to_vec()).unwrap();
        for (a, b) in back.probs().iter().zip(ch.probs()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lift_places_channel_on_requested_qubit() {
        let eps = 0.3;
        let ch = depolarizing(eps).unwrap().lift(1, 2).unwrap();
        let c1 = 1.0 - 4.0 * eps / 3.0;
        // Z on qubit 1 is index 12; anything touching only qubit 0 is untouched.
        assert!((ch.diag()[12] - c1).abs() < 1e-15);
        assert!((ch.diag()[4] - c1).abs() < 1e-15);
        assert_eq!(ch.diag()[3], 1.0);
        assert_eq!(ch.diag()[0], 1.0);
        assert!((ch.probs()[0] - (1.0 - eps)).abs() < 1e-15);
        assert!((ch.probs()[4] - eps / 3.0).abs() < 1e-15);
    }

    #[test]
    fn compose_multiplies_diagonals() {
        let a = depolarizing(0.1).unwrap().lift(0, 2).unwrap();
        let b = depolarizing(0.2).unwrap().lift(1, 2).unwrap();
        let ab = a.compose(&b).unwrap();
        for i in 0..16 {
            assert!((ab.diag()[i] - a.diag()[i] * b.diag()[i]).abs() < 1e-12);
        }
        let sum: f64 = ab.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_damping_frozen_ptm() {
        let gamma = 1e-3;
        let ch = amplitude_damping(gamma).unwrap();
        let m = ch.ptm().mat();
        let s = (1.0f64 - gamma).sqrt();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), s);
        assert_eq!(m.get(2, 2), s);
        assert_eq!(m.get(3, 0), gamma);
        assert_eq!(m.get(3, 3), 1.0 - gamma);
        assert_eq!(m.get(0, 3), 0.0);
        // Frozen scalar: 1 - (2 + 2 sqrt(1-g) - g) / 4.
        let expect = 1.0 - (2.0 + 2.0 * s - gamma) / 4.0;
        let got = gate_error_probability(&ch.clone().into());
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 5.0006e-4).abs() < 1e-8);
    }

    #[test]
    fn general_channel_validation() {
        let mut bad_tp = Mat::identity(4);
        bad_tp.set(0, 0, 0.9);
        assert!(matches!(
            GeneralChannel::new(PtmOperator::new(1, bad_tp).unwrap()),
            Err(Error::NotTracePreserving(_))
        ));
        let mut bad_norm = Mat::identity(4);
        bad_norm.set(1, 1, 1.2);
        assert!(matches!(
            GeneralChannel::new(PtmOperator::new(1, bad_norm).unwrap()),
            Err(Error::NotContractive(_))
        ));
        // Entries in range but the traceless block stretches: also rejected.
        let mut bad_block = Mat::identity(4);
        bad_block.set(3, 1, 0.5);
        assert!(matches!(
            GeneralChannel::new(PtmOperator::new(1, bad_block).unwrap()),
            Err(Error::NotContractive(_))
        ));
        // A non-unital affine column above the block is fine (amplitude
        // damping lives here).
        let gamma: f64 = 0.3;
        let mut damp = Mat::zeros(4);
        damp.set(0, 0, 1.0);
        damp.set(1, 1, (1.0 - gamma).sqrt());
        damp.set(2, 2, (1.0 - gamma).sqrt());
        damp.set(3, 0, gamma);
        damp.set(3, 3, 1.0 - gamma);
        assert!(GeneralChannel::new(PtmOperator::new(1, damp).unwrap()).is_ok());
    }

    #[test]
    fn general_lift_matches_pauli_lift() {
        let eps = 0.2;
        let pauli = depolarizing(eps).unwrap();
        let general = GeneralChannel::new(pauli.to_ptm()).unwrap();
        let lifted_p = pauli.lift(1, 2).unwrap().to_ptm();
        let lifted_g = general.lift(1, 2).unwrap();
        assert!(lifted_p.mat().max_abs_diff(lifted_g.ptm().mat()) < 1e-12);
    }

    #[test]
    fn depolarizing_error_probability_is_eps() {
        let ch: Channel = depolarizing(0.0123).unwrap().into();
        assert!((gate_error_probability(&ch) - 0.0123).abs() < 1e-15);
    }

    #[test]
    fn noisy_x_gate_on_zero_state() {
        let eps = 1e-3;
        let mut x = CMat::zeros(2);
        x.set(0, 1, Complex64::new(1.0, 0.0));
        x.set(1, 0, Complex64::new(1.0, 0.0));
        let gate = unitary_to_ptm(&x).unwrap();
        let noise: Channel = depolarizing(eps).unwrap().into();
        let out = apply_noisy_gate(&gate, &noise, &PtmState::zero_state(1)).unwrap();
        let expect = -(1.0 - 4.0 * eps / 3.0) * std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.coeffs()[3] - expect).abs() < 1e-15);
    }
}
