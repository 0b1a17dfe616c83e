//! Closed-form error bounds for noisy and mitigated estimators.
//!
//! Two families: dynamic-range/bias bounds for unmitigated circuits
//! (`noqem_*`), and RMSE bounds for the Monte Carlo mitigation estimators
//! (`qem_rmse_*`). All are cheap scalar formulas meant to be tabulated and
//! compared against simulation.

use crate::{Error, Result};

/// Names for the tabulated bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundKind {
    DynamicRangeLb,
    BiasUb,
    RmseBoundGeneral,
    RmseBoundPauli,
    Conjecture,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::DynamicRangeLb => "dynamic_range_lb",
            BoundKind::BiasUb => "bias_ub",
            BoundKind::RmseBoundGeneral => "rmse_bound_general",
            BoundKind::RmseBoundPauli => "rmse_bound_pauli",
            BoundKind::Conjecture => "conjecture",
        }
    }
}

/// One evaluated bound with the inputs it was computed from.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub name: BoundKind,
    pub value: f64,
    pub qubits: usize,
    /// Gate count for the estimator bounds, layer count for the dynamic range.
    pub depth: u64,
    pub ns: u64,
    pub eps: f64,
}

/// Shrinkage of the reachable signal window for an unmitigated circuit:
/// `exp(-4 eps_l N_L)` where `eps_l` lower-bounds the probability of each
/// Pauli error type per layer. For `depolarizing(eps)` use `eps_l = eps/3`.
pub fn noqem_dynamic_range(eps_l: f64, n_layers: u64) -> f64 {
    assert!(eps_l >= 0.0, "eps_l must be nonnegative, got {eps_l}");
    (-4.0 * eps_l * n_layers as f64).exp()
}

/// Worst-case bias of the unmitigated estimate: `2 eps_u N_G` where `eps_u`
/// upper-bounds the per-gate error probability.
pub fn noqem_error_upper(eps_u: f64, n_gates: u64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&eps_u),
        "eps_u must lie in [0, 1], got {eps_u}"
    );
    2.0 * eps_u * n_gates as f64
}

/// RMSE bound for the mitigation estimators that needs no knowledge of the
/// channels: `2^{n/2} sqrt(exp(2 N_G / N_s) - 1)`.
///
/// For `N_G << N_s` this is approximately `2^{n/2} sqrt(2 N_G / N_s)`.
pub fn qem_rmse_bound_general(n: usize, n_gates: u64, ns: u64) -> f64 {
    assert!(ns >= 1, "ns must be at least 1");
    let scale = 2.0f64.powi(n as i32).sqrt();
    scale * ((2.0 * n_gates as f64 / ns as f64).exp() - 1.0).sqrt()
}

/// Per-gate variance proxy for a Pauli channel with error probability at most
/// `eps_u`: `4 eps_u (1 - eps_u) / (1 - 2 eps_u)^2`. Singular at 1/2.
pub fn pauli_variance_upper(eps_u: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&eps_u) {
        return Err(Error::ParamRange(format!(
            "eps_u must lie in [0, 0.5), got {eps_u}"
        )));
    }
    Ok(4.0 * eps_u * (1.0 - eps_u) / (1.0 - 2.0 * eps_u).powi(2))
}

/// Refined per-gate rate for the Pauli RMSE bound:
/// `(5/2) sigma_u + (1/4) sigma_u^2`.
pub fn pauli_rate_refined(eps_u: f64) -> Result<f64> {
    let sigma = pauli_variance_upper(eps_u)?;
    Ok(2.5 * sigma + 0.25 * sigma * sigma)
}

/// Refined RMSE bound for Pauli channels:
/// `2^{n/2} sqrt(exp(eps_tilde N_G / N_s) - 1)` with
/// `eps_tilde = (5/2) sigma_u + (1/4) sigma_u^2`.
pub fn qem_rmse_bound_pauli(n: usize, n_gates: u64, ns: u64, eps_u: f64) -> Result<f64> {
    assert!(ns >= 1, "ns must be at least 1");
    let rate = pauli_rate_refined(eps_u)?;
    let scale = 2.0f64.powi(n as i32).sqrt();
    Ok(scale * ((rate * n_gates as f64 / ns as f64).exp() - 1.0).sqrt())
}

/// Small-`eps_u` form of [`qem_rmse_bound_pauli`] with the rate replaced by
/// `10 eps_u`. Within 0.5% of the exact bound for small rates and
/// `N_G/N_s <= 0.1`.
pub fn qem_rmse_bound_pauli_approx(n: usize, n_gates: u64, ns: u64, eps_u: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&eps_u) {
        return Err(Error::ParamRange(format!(
            "eps_u must lie in [0, 0.5), got {eps_u}"
        )));
    }
    assert!(ns >= 1, "ns must be at least 1");
    let scale = 2.0f64.powi(n as i32).sqrt();
    Ok(scale * ((10.0 * eps_u * n_gates as f64 / ns as f64).exp() - 1.0).sqrt())
}

/// Conjectured tighter RMSE form `sqrt(exp(eps N_G / N_s) - 1)`. Reported
/// next to measurements, never asserted.
pub fn qem_rmse_conjecture(eps: f64, n_gates: u64, ns: u64) -> f64 {
    assert!(ns >= 1, "ns must be at least 1");
    ((eps * n_gates as f64 / ns as f64).exp() - 1.0).sqrt()
}
