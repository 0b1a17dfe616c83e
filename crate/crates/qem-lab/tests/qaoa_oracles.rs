//! Independent checks of the QAOA circuit builder: a 16-dimensional
//! state-vector simulation of the same schedule must agree with the
//! transfer-matrix simulator, and the detection observable must be a
//! physically valid (unit-spectrum) measurement.

use num_complex::Complex64;
use qem_core::bounds::noqem_dynamic_range;
use qem_core::channels::depolarizing;
use qem_core::pauli::pauli_matrix;
use qem_core::simulator::{derive_rng, run_noiseless, run_noisy, Circuit, Gate};
use qem_core::{CMat, Observable, PauliIndex, PtmState};
use qem_lab::mud::{build_mud_observable, make_mud_instance, MudInstance};
use qem_lab::qaoa::{build_qaoa_circuit, gates_per_stage, ising_terms, noise_layer_count};

fn instance(seed: u64) -> (MudInstance, Observable) {
    let mut rng = derive_rng(seed, &[99]);
    let inst = make_mud_instance(4, 4, 12.0, &mut rng);
    let obs = build_mud_observable(&inst).unwrap();
    (inst, obs)
}

/// Full complex state-vector simulation of the same gate schedule the
/// circuit builder emits: phases `exp(-i gamma * h_term(x))` for the
/// diagonal rounds and the closed-form single-qubit mixer.
fn qaoa_statevector_expectation(obs: &Observable, p: usize) -> f64 {
    let n = obs.qubits();
    let dim = 1usize << n;
    let terms = ising_terms(obs).unwrap();
    let spin = |x: usize, q: usize| if (x >> q) & 1 == 0 { 1.0 } else { -1.0 };

    let mut psi = vec![Complex64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    for k in 1..=p {
        let gamma = k as f64 / p as f64;
        let beta = 1.0 - gamma;
        for (x, amp) in psi.iter_mut().enumerate() {
            let mut phase = 0.0;
            for &(i, j, g) in &terms.pairs {
                phase -= gamma * g * spin(x, i) * spin(x, j);
            }
            for &(i, w) in &terms.singles {
                phase -= gamma * w * spin(x, i);
            }
            *amp *= Complex64::from_polar(1.0, phase);
        }
        let (cb, sb) = (beta.cos(), beta.sin());
        let mix = Complex64::new(0.0, -sb);
        for q in 0..n {
            let bit = 1usize << q;
            for x in 0..dim {
                if x & bit == 0 {
                    let y = x | bit;
                    let (ax, ay) = (psi[x], psi[y]);
                    psi[x] = cb * ax + mix * ay;
                    psi[y] = cb * ay + mix * ax;
                }
            }
        }
    }

    // <H> for the diagonal Hamiltonian the observable encodes.
    psi.iter()
        .enumerate()
        .map(|(x, amp)| {
            let mut h = 0.0;
            for &(i, w) in &terms.singles {
                h += w * spin(x, i);
            }
            for &(i, j, g) in &terms.pairs {
                h += g * spin(x, i) * spin(x, j);
            }
            amp.norm_sqr() * h
        })
        .sum()
}

#[test]
fn statevector_oracle_matches_transfer_matrix_simulator() {
    let (_, obs) = instance(11);
    for p in [1, 2, 3, 5, 8] {
        let circuit = build_qaoa_circuit(&obs, p, 0.0).unwrap();
        let ptm_value = run_noiseless(&circuit);
        let sv_value = qaoa_statevector_expectation(&obs, p);
        assert!(
            (ptm_value - sv_value).abs() < 1e-9,
            "p={p}: transfer-matrix {ptm_value} vs state-vector {sv_value}"
        );
    }
}

#[test]
fn statevector_oracle_matches_on_other_instances() {
    for seed in [3, 17, 2026] {
        let (_, obs) = instance(seed);
        let circuit = build_qaoa_circuit(&obs, 4, 0.0).unwrap();
        let diff = (run_noiseless(&circuit) - qaoa_statevector_expectation(&obs, 4)).abs();
        assert!(diff < 1e-9, "seed {seed}: mismatch {diff}");
    }
}

#[test]
fn detection_observable_has_unit_spectrum() {
    let (_, obs) = instance(11);
    let n = obs.qubits();
    let dim = 1usize << n;
    let scale = 1.0 / (dim as f64).sqrt();
    let mut m = CMat::zeros(dim);
    for (code, &o) in obs.coeffs().iter().enumerate() {
        if o == 0.0 {
            continue;
        }
        let s = pauli_matrix(PauliIndex::new(code, n).unwrap());
        for r in 0..dim {
            for c in 0..dim {
                let v = m.get(r, c) + s.get(r, c) * Complex64::new(o * scale, 0.0);
                m.set(r, c, v);
            }
        }
    }
    assert!(m.hermiticity_residual() < 1e-12);
    let (lo, hi) = m.hermitian_eigen_range();
    assert!(lo >= -1.0 - 1e-9 && hi <= 1.0 + 1e-9, "spectrum [{lo}, {hi}]");
    // The objective actually spreads across the interval rather than
    // collapsing to a point.
    assert!(hi - lo > 0.1);
}

#[test]
fn unmitigated_decay_stays_inside_dynamic_range_envelope() {
    // Single-qubit rotations: every noisy gate is its own transversal layer.
    let x = PauliIndex::new(1, 1).unwrap();
    let eps = 1e-2;
    let theta = std::f64::consts::PI / 16.0;
    let obs = Observable::z_on(1, 0).unwrap();
    for ng in [1usize, 5, 20, 100, 400] {
        let noise = depolarizing(eps).unwrap();
        let steps = (0..ng)
            .map(|_| qem_core::simulator::CircuitStep {
                gate: Gate::rotation(x, theta),
                noise: vec![noise.clone().into()],
            })
            .collect();
        let circuit = Circuit::new(PtmState::zero_state(1), obs.clone(), steps).unwrap();
        assert_eq!(noise_layer_count(&circuit), ng);
        let envelope = noqem_dynamic_range(eps / 3.0, ng as u64);
        assert!(
            run_noisy(&circuit).abs() <= envelope + 1e-12,
            "ng={ng}: |noisy| exceeds envelope {envelope}"
        );
    }
}

#[test]
fn qaoa_decay_stays_inside_layered_envelope() {
    let (_, obs) = instance(11);
    let eps = 1e-2;
    let p = 4;
    let circuit = build_qaoa_circuit(&obs, p, eps).unwrap();
    let terms = ising_terms(&obs).unwrap();
    let per_stage = gates_per_stage(&terms, 4);
    for k in 0..=p {
        let prefix = circuit.prefix(k * per_stage);
        let layers = noise_layer_count(&prefix);
        assert_eq!(layers, 2 * k);
        let envelope = noqem_dynamic_range(eps / 3.0, layers as u64);
        let noisy = run_noisy(&prefix);
        assert!(
            noisy.abs() <= envelope + 1e-12,
            "stage {k}: |{noisy}| above envelope {envelope}"
        );
    }
}
