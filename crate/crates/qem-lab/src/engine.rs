//! Deterministic parallel execution of Monte Carlo trials plus the small
//! statistics toolbox the experiment drivers share.
//!
//! Trials are embarrassingly parallel: each one derives its own RNG stream
//! from (master seed, trial index), so the set of per-trial values is
//! independent of scheduling. Aggregation always happens sequentially over
//! the index-ordered values with compensated summation, which makes every
//! emitted number invariant under the worker count.

use qem_core::simulator::PreparedQem;
use rayon::prelude::*;
use std::sync::OnceLock;

/// Environment variable capping the rayon worker count.
pub const THREADS_ENV: &str = "QEM_LAB_THREADS";

static POOL_INIT: OnceLock<usize> = OnceLock::new();

/// Installs the global thread pool, honoring `QEM_LAB_THREADS` if set.
/// Returns the worker count in effect. Safe to call repeatedly; only the
/// first call configures the pool.
pub fn init_threads() -> usize {
    *POOL_INIT.get_or_init(|| {
        let requested = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&k| k >= 1);
        if let Some(k) = requested {
            // Ignore failure: a pool may already exist (e.g. in tests), and
            // determinism does not depend on the worker count anyway.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            k
        } else {
            rayon::current_num_threads()
        }
    })
}

/// Sum with Neumaier's compensation, sequential and order-stable.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Summary statistics of one batch of trial estimates around a reference
/// value (the noiseless expectation).
#[derive(Clone, Copy, Debug)]
pub struct TrialStats {
    pub trials: u64,
    pub mean: f64,
    /// Unbiased standard deviation across trials.
    pub std: f64,
    /// Root mean square deviation from the reference value.
    pub rmse: f64,
    /// Approximate standard error of `rmse` (Gaussian delta method).
    pub rmse_se: f64,
}

impl TrialStats {
    pub fn from_values(values: &[f64], reference: f64) -> TrialStats {
        let t = values.len() as f64;
        assert!(t >= 1.0, "at least one trial required");
        let mean = compensated_sum(values) / t;
        let dev_sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if values.len() > 1 { compensated_sum(&dev_sq) / (t - 1.0) } else { 0.0 };
        let err_sq: Vec<f64> = values.iter().map(|v| (v - reference).powi(2)).collect();
        let rmse = (compensated_sum(&err_sq) / t).sqrt();
        TrialStats {
            trials: values.len() as u64,
            mean,
            std: var.sqrt(),
            rmse,
            rmse_se: if t > 1.0 { rmse * (0.5 / (t - 1.0)).sqrt() } else { f64::NAN },
        }
    }

    /// Standard error of the trial mean.
    pub fn mean_se(&self) -> f64 {
        self.std / (self.trials as f64).sqrt()
    }
}

/// Which sampling estimator to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McKind {
    Empirical,
    Concat,
}

/// Runs `trials` independent estimates in parallel and returns them in trial
/// order (deterministic for a fixed prepared circuit).
pub fn run_trials(prep: &PreparedQem, kind: McKind, trials: u64) -> Vec<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| match kind {
            McKind::Empirical => prep.estimate_empirical(t),
            McKind::Concat => prep.estimate_concat(t),
        })
        .collect()
}

/// Trial statistics for one prepared circuit and estimator.
pub fn mc_stats(prep: &PreparedQem, kind: McKind, trials: u64, reference: f64) -> TrialStats {
    TrialStats::from_values(&run_trials(prep, kind, trials), reference)
}

/// Ordinary least squares slope of ln(y) against ln(x), ignoring
/// non-positive points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "x/y length mismatch");
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    assert!(pts.len() >= 2, "need at least two positive points for a slope");
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Index of the first adjacent pair where `a` crosses from below `b` to
/// above it (or the reverse), if any.
pub fn first_crossing(a: &[f64], b: &[f64]) -> Option<usize> {
    assert_eq!(a.len(), b.len());
    let mut prev: Option<bool> = None;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let above = x > y;
        if let Some(p) = prev {
            if p != above {
                return Some(i);
            }
        }
        prev = Some(above);
    }
    None
}

/// Stable 64-bit stream id for a grid row: hashes the base seed with the row
/// tags through the splitmix64 finalizer chain.
pub fn row_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base;
    for &t in tags {
        x = splitmix64(x ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    splitmix64(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
