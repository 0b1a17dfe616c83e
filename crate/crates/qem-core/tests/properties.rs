//! Randomized structural invariants: representation homomorphism, pairing
//! duality, channel round-trips, covariance shape, and moment-recursion
//! monotonicity.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qem_core::channels::{depolarizing, PauliChannel};
use qem_core::pauli::{
    density_to_ptm, expectation, observable_to_ptm, pauli_matrix, unitary_to_ptm, walsh_apply,
    walsh_matrix, PauliIndex, PtmState,
};
use qem_core::quasiprob::{
    empirical_draw_count, empirical_second_moment, invert_pauli, residual_covariance,
    residual_covariance_exact,
};
use qem_core::simulator::{pauli_noise_moment, Gate, MomentRecursion};
use qem_core::{CMat, Mat};

fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-ish random unitary via modified Gram-Schmidt on a Gaussian matrix.
fn random_unitary(n: usize, seed: u64) -> CMat {
    let d = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Complex64>> = (0..d)
        .map(|_| (0..d).map(|_| cgauss(&mut rng)).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let proj: Complex64 = (0..d).map(|i| cols[k][i].conj() * cols[j][i]).sum();
            for i in 0..d {
                let sub = proj * cols[k][i];
                cols[j][i] -= sub;
            }
        }
        let norm: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut cols[j] {
            *z /= norm;
        }
    }
    let mut u = CMat::zeros(d);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            u.set(i, j, z);
        }
    }
    u
}

/// Random density matrix A A^dag / Tr.
fn random_density(n: usize, seed: u64) -> CMat {
    let d = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517cc1b727220a95);
    let mut a = CMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            a.set(i, j, cgauss(&mut rng));
        }
    }
    let rho = a.matmul(&a.adjoint());
    let tr = rho.trace();
    let mut out = CMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, rho.get(i, j) / tr);
        }
    }
    out
}

/// Random Hermitian with spectrum safely inside [-1, 1].
fn random_capped_hermitian(n: usize, seed: u64) -> CMat {
    let d = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545f4914f6cdd1d);
    let mut a = CMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            a.set(i, j, cgauss(&mut rng));
        }
    }
    let mut h = CMat::zeros(d);
    let adj = a.adjoint();
    for i in 0..d {
        for j in 0..d {
            h.set(i, j, (a.get(i, j) + adj.get(i, j)) * 0.5);
        }
    }
    let (lo, hi) = h.hermitian_eigen_range();
    let scale = 0.9 / lo.abs().max(hi.abs()).max(1e-12);
    let mut out = CMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, h.get(i, j) * scale);
        }
    }
    out
}

/// Random Pauli channel whose diagonal stays well away from zero.
fn random_pauli_channel(n: usize, seed: u64) -> PauliChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let d = 4usize.pow(n as u32);
    let mut probs: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let tail: f64 = probs[1..].iter().sum();
    // Keep at least 80% identity so every diagonal entry exceeds 0.6.
    let shrink = 0.2 / tail.max(1e-12);
    for p in probs[1..].iter_mut() {
        *p *= shrink;
    }
    probs[0] = 1.0 - probs[1..].iter().sum::<f64>();
    PauliChannel::new(n, probs).expect("valid probabilities")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ptm_conversion_is_a_homomorphism(seed in any::<u64>(), n in 1usize..3) {
        let u = random_unitary(n, seed);
        let v = random_unitary(n, seed.wrapping_add(1));
        let uv = u.matmul(&v);
        let g_uv = unitary_to_ptm(&uv).unwrap();
        let g_u = unitary_to_ptm(&u).unwrap();
        let g_v = unitary_to_ptm(&v).unwrap();
        let prod = g_u.mat().matmul(g_v.mat());
        prop_assert!(g_uv.mat().max_abs_diff(&prod) < 1e-9);
    }

    #[test]
    fn unitary_ptms_are_orthogonal(seed in any::<u64>(), n in 1usize..3) {
        let g = unitary_to_ptm(&random_unitary(n, seed)).unwrap();
        prop_assert!(g.orthogonality_residual() < 1e-9);
    }

    #[test]
    fn pairing_equals_trace(seed in any::<u64>(), n in 1usize..3) {
        let rho = random_density(n, seed);
        let m = random_capped_hermitian(n, seed);
        let state = density_to_ptm(&rho).unwrap();
        let obs = observable_to_ptm(&m, true).unwrap();
        let lhs = expectation(&obs, &state);
        let rhs = m.matmul(&rho).trace();
        prop_assert!(rhs.im.abs() < 1e-10);
        prop_assert!((lhs - rhs.re).abs() < 1e-10);
    }

    #[test]
    fn pauli_channel_probs_roundtrip(seed in any::<u64>()) {
        let ch = random_pauli_channel(1, seed);
        let back = PauliChannel::from_diag(1, ch.diag().to_vec()).unwrap();
        for (a, b) in ch.probs().iter().zip(back.probs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_reconstructs_reciprocal(seed in any::<u64>()) {
        let ch = random_pauli_channel(1, seed);
        let d = invert_pauli(&ch).unwrap();
        let mut gamma = d.alpha().to_vec();
        walsh_apply(&mut gamma, 1);
        for (g, c) in gamma.iter().zip(ch.diag()) {
            prop_assert!((g - 1.0 / c).abs() < 1e-10);
        }
        prop_assert!(d.sampling_overhead_factor() >= 1.0 - 1e-12);
    }

    #[test]
    fn covariance_is_psd_and_capped(eps in 0.0f64..0.3, ns in 100u64..20000) {
        let ch = depolarizing(eps).unwrap();
        let d = invert_pauli(&ch).unwrap();
        let xi = residual_covariance(&d, &ch, ns).unwrap();
        prop_assert!(xi.min_symmetric_eigenvalue() > -1e-10);
        prop_assert!(xi.max_abs() <= 2.0 / ns as f64 + 1e-15);
        // Larger budgets shrink the covariance entrywise.
        let xi10 = residual_covariance(&d, &ch, ns * 10).unwrap();
        prop_assert!(xi10.max_abs() <= xi.max_abs() + 1e-15);
    }

    #[test]
    fn covariance_consistent_with_second_moment(seed in any::<u64>(), ns in 50u64..5000) {
        // Cov(c~)_ij = c_i c_j [W E{a~ a~^T} W - W a a^T W]_ij must equal the
        // direct formula; ties the two derived moment expressions together.
        let ch = random_pauli_channel(1, seed);
        let d = invert_pauli(&ch).unwrap();
        let draws = empirical_draw_count(&d, ns);
        let e = empirical_second_moment(&d, draws);
        let w = walsh_matrix(1).unwrap();
        let wew = w.matmul(&e).matmul(&w);
        let mut walpha = d.alpha().to_vec();
        walsh_apply(&mut walpha, 1);
        let xi = residual_covariance_exact(&d, &ch, draws).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let c2 = ch.diag()[i] * ch.diag()[j];
                let expect = c2 * (wew.get(i, j) - walpha[i] * walpha[j]);
                prop_assert!((xi.get(i, j) - expect).abs() < 1e-12,
                    "entry ({},{}) {} vs {}", i, j, xi.get(i, j), expect);
            }
        }
    }

    #[test]
    fn moment_recursion_stays_psd_with_bounded_trace(
        seed in any::<u64>(), eps in 1e-4f64..0.05, steps in 1usize..12,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = depolarizing(eps).unwrap();
        let ns = 500u64;
        let (e, mean) = pauli_noise_moment(&ch, ns).unwrap();
        let d = invert_pauli(&ch).unwrap();
        let draws = empirical_draw_count(&d, ns);
        let xi_max = {
            let xi = residual_covariance_exact(&d, &ch, draws).unwrap();
            xi.max_abs()
        };
        let mut rec = MomentRecursion::new(&PtmState::zero_state(1));
        let mut noiseless = PtmState::zero_state(1).coeffs().to_vec();
        for _ in 0..steps {
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let axis = 1 + (rng.random::<u32>() % 3) as usize;
            let gate = Gate::rotation(PauliIndex::new(axis, 1).unwrap(), theta);
            gate.apply(&mut noiseless);
            rec.step_gate(&gate);
            let trace_before: f64 = (0..4).map(|i| rec.second_moment().get(i, i)).sum();
            rec.step_noise_pauli(&e, &mean);
            let trace_after: f64 = (0..4).map(|i| rec.second_moment().get(i, i)).sum();
            prop_assert!(trace_after <= trace_before * (1.0 + xi_max) + 1e-12);
            // Sigma = A - mu mu^T stays PSD.
            let mut sigma = rec.second_moment().clone();
            let mu = rec.mean();
            for i in 0..4 {
                for j in 0..4 {
                    sigma.set(i, j, sigma.get(i, j) - mu[i] * mu[j]);
                }
            }
            prop_assert!(sigma.min_symmetric_eigenvalue() > -1e-9);
            // Mean path tracks the noiseless trajectory.
            for (m, v) in rec.mean().iter().zip(&noiseless) {
                prop_assert!((m - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn walsh_involution_small_n() {
    for n in 1..=3usize {
        let w = walsh_matrix(n).unwrap();
        let sq = w.matmul(&w);
        let d = 4usize.pow(n as u32);
        let mut ident = Mat::identity(d);
        for k in 0..d * d {
            ident.data_mut()[k] *= d as f64;
        }
        assert!(sq.max_abs_diff(&ident) < 1e-12);
        for &x in w.data() {
            assert!(x == 1.0 || x == -1.0);
        }
    }
}

#[test]
fn pauli_matrices_square_to_identity() {
    for n in 1..=2usize {
        let d = 4usize.pow(n as u32);
        for code in 0..d {
            let p = pauli_matrix(PauliIndex::new(code, n).unwrap());
            let sq = p.matmul(&p);
            let ident = CMat::identity(1 << n);
            let mut max = 0.0f64;
            for i in 0..(1 << n) {
                for j in 0..(1 << n) {
                    max = max.max((sq.get(i, j) - ident.get(i, j)).norm());
                }
            }
            assert!(max < 1e-12);
        }
    }
}
