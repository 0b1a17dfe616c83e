//! Multiuser-detection problem instances and their Ising observables.
//!
//! A base station receives `y = H x + w` where the channel matrix `H` has
//! i.i.d. Gaussian entries of variance `1/m`, the transmitted symbols are
//! `x in {-1, +1}^n`, and `w` is white Gaussian noise. Maximum-likelihood
//! detection minimizes `||y - H x||^2`, which up to constants maximizes the
//! Ising objective
//!
//! `f(x) = (1/Z) ( sum_i [H^T y]_i x_i - sum_{i<j} [H^T H]_{ij} x_i x_j )`.
//!
//! Promoting `x_i` to a Pauli `Z_i` turns `f` into an observable whose
//! expectation a quantum optimizer estimates; `Z` normalizes the coefficient
//! l1 norm to 1 so the spectrum fits in [-1, 1].

use qem_core::pauli::PauliIndex;
use qem_core::Observable;
use rand::Rng;
use rand_distr::StandardNormal;

/// One detection problem: channel, ground truth, received signal.
#[derive(Clone, Debug)]
pub struct MudInstance {
    /// Channel matrix, `m` rows of length `n`.
    pub h: Vec<Vec<f64>>,
    /// Transmitted symbols, each plus or minus one.
    pub x_true: Vec<f64>,
    /// Received signal `H x + w`, length `m`.
    pub y: Vec<f64>,
    pub noise_var: f64,
    /// l1 norm of the Ising coefficients; normalizes the observable.
    pub z_norm: f64,
}

impl MudInstance {
    pub fn users(&self) -> usize {
        self.x_true.len()
    }

    pub fn receivers(&self) -> usize {
        self.y.len()
    }
}

/// Linear (`[H^T y]_i`) and pair (`[H^T H]_{ij}`, i < j in lexicographic
/// order) Ising coefficients of an instance.
pub fn ising_coefficients(h: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let m = h.len();
    assert!(m >= 1, "at least one receiver required");
    let n = h[0].len();
    assert_eq!(y.len(), m, "signal length mismatch");
    let mut linear = vec![0.0f64; n];
    for (row, &yi) in h.iter().zip(y) {
        assert_eq!(row.len(), n, "ragged channel matrix");
        for (li, &hij) in linear.iter_mut().zip(row) {
            *li += hij * yi;
        }
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut g = 0.0;
            for row in h {
                g += row[i] * row[j];
            }
            pairs.push((i, j, g));
        }
    }
    (linear, pairs)
}

/// Draws a random instance: `H` entries are N(0, 1/m) (row major draw
/// order), `x_true` uniform signs, then the noise samples. The noise
/// variance is `10^(-snr_db/10)`, about 0.0631 at 12 dB.
pub fn make_mud_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    snr_db: f64,
    rng: &mut R,
) -> MudInstance {
    assert!(n >= 1 && m >= 1, "need at least one user and one receiver");
    let scale = (m as f64).sqrt().recip();
    let h: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let x_true: Vec<f64> =
        (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let noise_var = 10f64.powf(-snr_db / 10.0);
    let noise_std = noise_var.sqrt();
    let y: Vec<f64> = h
        .iter()
        .map(|row| {
            let signal: f64 = row.iter().zip(&x_true).map(|(a, b)| a * b).sum();
            signal + noise_std * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let (linear, pairs) = ising_coefficients(&h, &y);
    let z_norm = linear.iter().map(|a| a.abs()).sum::<f64>()
        + pairs.iter().map(|(_, _, g)| g.abs()).sum::<f64>();
    MudInstance { h, x_true, y, noise_var, z_norm }
}

/// The normalized Ising objective as a PTM observable: `+coeff/Z` on each
/// single-`Z` string, `-coeff/Z` on each `Z_i Z_j` string, zero elsewhere
/// (in particular zero identity component).
pub fn build_mud_observable(inst: &MudInstance) -> qem_core::Result<Observable> {
    let n = inst.users();
    assert!(inst.z_norm > 0.0, "degenerate instance: zero coefficient norm");
    let (linear, pairs) = ising_coefficients(&inst.h, &inst.y);
    let mut terms: Vec<(PauliIndex, f64)> = Vec::with_capacity(linear.len() + pairs.len());
    for (i, &a) in linear.iter().enumerate() {
        terms.push((PauliIndex::single(n, i, 3)?, a / inst.z_norm));
    }
    for &(i, j, g) in &pairs {
        let zz = PauliIndex::single(n, i, 3)?.product(&PauliIndex::single(n, j, 3)?).0;
        terms.push((zz, -g / inst.z_norm));
    }
    Observable::from_pauli_terms(n, &terms)
}

/// Value of the normalized objective on a classical sign assignment.
pub fn objective_value(inst: &MudInstance, x: &[f64]) -> f64 {
    let (linear, pairs) = ising_coefficients(&inst.h, &inst.y);
    let mut f = 0.0;
    for (a, xi) in linear.iter().zip(x) {
        f += a * xi;
    }
    for &(i, j, g) in &pairs {
        f -= g * x[i] * x[j];
    }
    f / inst.z_norm
}

/// Exhaustive maximum of the objective over all 2^n sign assignments.
/// Cheap for the n = 4 experiments; asserts n <= 20 to keep it that way.
pub fn brute_force_optimum(inst: &MudInstance) -> (Vec<f64>, f64) {
    let n = inst.users();
    assert!(n <= 20, "brute force capped at 20 users");
    let mut best_x = vec![1.0; n];
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> =
            (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let f = objective_value(inst, &x);
        if f > best {
            best = f;
            best_x = x;
        }
    }
    (best_x, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qem_core::pauli::expectation;
    use qem_core::simulator::derive_rng;
    use qem_core::PtmState;

    #[test]
    fn twelve_db_noise_variance() {
        let mut rng = derive_rng(1, &[0]);
        let inst = make_mud_instance(4, 4, 12.0, &mut rng);
        assert!((inst.noise_var - 0.063096).abs() < 1e-6);
    }

    #[test]
    fn instances_are_seed_deterministic() {
        let a = make_mud_instance(4, 4, 12.0, &mut derive_rng(9, &[3]));
        let b = make_mud_instance(4, 4, 12.0, &mut derive_rng(9, &[3]));
        assert_eq!(a.h, b.h);
        assert_eq!(a.y, b.y);
        assert_eq!(a.x_true, b.x_true);
    }

    #[test]
    fn signal_power_matches_channel_scaling() {
        // E ||H x||^2 = n when H entries have variance 1/m.
        let n = 4;
        let m = 4;
        let reps = 2000;
        let mut total = 0.0;
        for k in 0..reps {
            let mut rng = derive_rng(123, &[k]);
            let inst = make_mud_instance(n, m, 12.0, &mut rng);
            for row in &inst.h {
                let s: f64 = row.iter().zip(&inst.x_true).map(|(a, b)| a * b).sum();
                total += s * s;
            }
        }
        let mean = total / reps as f64;
        // Var of each ||Hx||^2 is O(n); 2000 reps puts the mean within a few
        // percent of n with overwhelming probability.
        assert!((mean - n as f64).abs() < 0.25, "mean signal power {mean}");
    }

    #[test]
    fn observable_is_traceless_and_matches_classical_objective() {
        let mut rng = derive_rng(77, &[1]);
        let inst = make_mud_instance(4, 4, 12.0, &mut rng);
        let obs = build_mud_observable(&inst).unwrap();
        assert!(obs.zero_bias());

        // On a computational basis state the observable reproduces the
        // classical Ising objective.
        for mask in [0usize, 5, 9, 15] {
            let x: Vec<f64> =
                (0..4).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let state = PtmState::computational(4, mask);
            let got = expectation(&obs, &state);
            let want = objective_value(&inst, &x);
            assert!((got - want).abs() < 1e-12, "mask {mask}: {got} vs {want}");
        }
    }

    #[test]
    fn degenerate_single_user_is_a_z_observable() {
        let mut rng = derive_rng(5, &[2]);
        let inst = make_mud_instance(1, 1, 12.0, &mut rng);
        let obs = build_mud_observable(&inst).unwrap();
        let z = Observable::z_on(1, 0).unwrap();
        let sign = inst.h[0][0] * inst.y[0];
        for (got, want) in obs.coeffs().iter().zip(z.coeffs()) {
            assert!((got - want * sign.signum()).abs() < 1e-12);
        }
    }

    #[test]
    fn optimum_dominates_truth_and_random_guesses() {
        let mut rng = derive_rng(31, &[4]);
        let inst = make_mud_instance(4, 4, 12.0, &mut rng);
        let (best_x, best) = brute_force_optimum(&inst);
        assert!(best >= objective_value(&inst, &inst.x_true) - 1e-15);
        assert_eq!(best_x.len(), 4);
        assert!(best.abs() <= 1.0 + 1e-12, "objective is normalized");
    }
}
