//! QAOA circuits for Ising observables under the fixed adiabatic-style
//! schedule `gamma_k = k/P`, `beta_k = 1 - k/P`.
//!
//! Stage `k` applies `exp(-i gamma_k H)` — decomposed into commuting ZZ and
//! Z rotations, one gate per nonzero Hamiltonian term — followed by the
//! mixer `exp(-i beta_k X_q)` on every qubit. Every elementary gate is
//! trailed by a lifted single-qubit depolarizing channel on each qubit the
//! gate touches, so two-qubit gates carry two noise channels.

use qem_core::channels::{depolarizing, Channel};
use qem_core::pauli::{dim2, PauliIndex};
use qem_core::simulator::{Circuit, CircuitStep, Gate};
use qem_core::{Observable, PtmState};

/// Hamiltonian terms recovered from a Z-type observable: `H = sum_i w_i Z_i
/// + sum_{i<j} g_ij Z_i Z_j` (the pair weight carries its sign).
#[derive(Clone, Debug, Default)]
pub struct IsingTerms {
    pub singles: Vec<(usize, f64)>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl IsingTerms {
    pub fn term_count(&self) -> usize {
        self.singles.len() + self.pairs.len()
    }
}

/// Extracts the Ising terms of an observable. Rejects observables with an
/// identity component or with strings outside {Z_i, Z_i Z_j}.
pub fn ising_terms(obs: &Observable) -> anyhow::Result<IsingTerms> {
    let n = obs.qubits();
    let scale = (dim2(n) as f64).sqrt();
    let mut terms = IsingTerms::default();
    for (code, &o) in obs.coeffs().iter().enumerate() {
        if o == 0.0 {
            continue;
        }
        anyhow::ensure!(code != 0, "observable has an identity component");
        let idx = PauliIndex::new(code, n).expect("enumerated in range");
        let mut zs: Vec<usize> = Vec::new();
        for q in 0..n {
            match idx.digit(q) {
                0 => {}
                3 => zs.push(q),
                _ => anyhow::bail!("observable is not Z-type at Pauli {}", idx.label()),
            }
        }
        let w = o / scale;
        match zs.as_slice() {
            [i] => terms.singles.push((*i, w)),
            [i, j] => terms.pairs.push((*i, *j, w)),
            _ => anyhow::bail!("observable has a weight-{} Z string", zs.len()),
        }
    }
    terms.singles.sort_by_key(|t| t.0);
    terms.pairs.sort_by_key(|t| (t.0, t.1));
    Ok(terms)
}

/// Elementary gates per stage: one per Hamiltonian term plus `n` mixers.
pub fn gates_per_stage(terms: &IsingTerms, n: usize) -> usize {
    terms.term_count() + n
}

/// Builds the `p`-stage QAOA circuit on `|+>^n` for the observable, with a
/// lifted depolarizing channel of strength `eps` after each gate on each
/// touched qubit. `eps = 0` adds no noise channels at all.
pub fn build_qaoa_circuit(obs: &Observable, p: usize, eps: f64) -> anyhow::Result<Circuit> {
    let n = obs.qubits();
    let terms = ising_terms(obs)?;
    let depol_on: Vec<Channel> = if eps > 0.0 {
        (0..n)
            .map(|q| depolarizing(eps)?.lift(q, n).map(Channel::from))
            .collect::<qem_core::Result<_>>()?
    } else {
        Vec::new()
    };
    let noise_for = |qubits: &[usize]| -> Vec<Channel> {
        if eps > 0.0 {
            qubits.iter().map(|&q| depol_on[q].clone()).collect()
        } else {
            Vec::new()
        }
    };

    let mut steps = Vec::with_capacity(p * gates_per_stage(&terms, n));
    for k in 1..=p {
        let gamma = k as f64 / p as f64;
        let beta = 1.0 - gamma;
        for &(i, j, g) in &terms.pairs {
            let zz = PauliIndex::single(n, i, 3)?.product(&PauliIndex::single(n, j, 3)?).0;
            steps.push(CircuitStep {
                gate: Gate::rotation(zz, 2.0 * gamma * g),
                noise: noise_for(&[i, j]),
            });
        }
        for &(i, w) in &terms.singles {
            steps.push(CircuitStep {
                gate: Gate::rotation(PauliIndex::single(n, i, 3)?, 2.0 * gamma * w),
                noise: noise_for(&[i]),
            });
        }
        for q in 0..n {
            steps.push(CircuitStep {
                gate: Gate::rotation(PauliIndex::single(n, q, 1)?, 2.0 * beta),
                noise: noise_for(&[q]),
            });
        }
    }
    Ok(Circuit::new(PtmState::plus_state(n), obs.clone(), steps)?)
}

/// Number of transversal noise layers in a circuit, the `N_L` the
/// exponential dynamic-range envelope is evaluated with.
///
/// A run of consecutive steps counts as one layer when (a) every gate in the
/// run acts on a single qubit — single-qubit rotations never move a Pauli
/// string's support, so the contraction argument survives the interleaving —
/// and (b) the runs' noise channels jointly touch every qubit, none twice.
/// Multi-qubit gates break the run. For the single-qubit experiments this
/// reduces to one layer per noisy gate; the QAOA stage contributes its Z and
/// its mixer round, two layers per stage.
pub fn noise_layer_count(circuit: &Circuit) -> usize {
    let n = circuit.qubits();
    let mut layers = 0usize;
    let mut touched = vec![false; n];
    let mut covered = 0usize;
    let mut flush = |touched: &mut Vec<bool>, covered: &mut usize| {
        if *covered == n {
            layers += 1;
        }
        touched.iter_mut().for_each(|t| *t = false);
        *covered = 0;
    };
    for step in circuit.steps() {
        if gate_support(&step.gate, n).len() > 1 {
            flush(&mut touched, &mut covered);
            continue;
        }
        let supports: Vec<usize> =
            step.noise.iter().flat_map(|ch| channel_support(ch, n)).collect();
        if supports.iter().any(|&q| touched[q]) {
            flush(&mut touched, &mut covered);
        }
        for &q in &supports {
            if !touched[q] {
                touched[q] = true;
                covered += 1;
            }
        }
    }
    flush(&mut touched, &mut covered);
    layers
}

/// Qubits a gate acts on nontrivially (conservatively all of them for a
/// dense PTM).
fn gate_support(gate: &Gate, n: usize) -> Vec<usize> {
    match gate {
        Gate::Identity(_) => Vec::new(),
        Gate::Rotation(r) => {
            let g = r.generator();
            (0..n).filter(|&q| g.digit(q) != 0).collect()
        }
        Gate::PauliConj { idx, .. } => (0..n).filter(|&q| idx.digit(q) != 0).collect(),
        Gate::Dense(_) => (0..n).collect(),
    }
}

/// Qubits a channel acts on nontrivially: qubit `q` is in the support iff
/// the transfer matrix depends on `q`'s Pauli digit. Merely damping strings
/// that happen to overlap `q` does not count — a channel lifted onto one
/// qubit damps every string overlapping it, including strings with weight
/// elsewhere, but its action is still the identity on the other factors.
fn channel_support(ch: &Channel, n: usize) -> Vec<usize> {
    let mut support = Vec::new();
    match ch {
        Channel::Pauli(p) => {
            let diag = p.diag();
            for q in 0..n {
                let mask = !(3usize << (2 * q));
                let touched = diag
                    .iter()
                    .enumerate()
                    .any(|(code, &d)| (d - diag[code & mask]).abs() > 1e-15);
                if touched {
                    support.push(q);
                }
            }
        }
        Channel::General(g) => {
            let ptm = g.ptm();
            let m = ptm.mat();
            let dim = m.dim();
            for q in 0..n {
                let shift = 2 * q;
                let mask = !(3usize << shift);
                let mut touched = false;
                'scan: for r in 0..dim {
                    for c in 0..dim {
                        let v = m.get(r, c);
                        if (r >> shift) & 3 != (c >> shift) & 3 {
                            // Identity on factor q never mixes its digits.
                            if v.abs() > 1e-15 {
                                touched = true;
                                break 'scan;
                            }
                        } else if (v - m.get(r & mask, c & mask)).abs() > 1e-15 {
                            touched = true;
                            break 'scan;
                        }
                    }
                }
                if touched {
                    support.push(q);
                }
            }
        }
    }
    support
}
