//! Pauli transfer matrix (PTM) simulation with Monte Carlo quasi-probability
//! error mitigation.
//!
//! Everything lives in the PTM picture: `n`-qubit states are real vectors of
//! length `4^n` holding normalized Pauli expectation values, operations are
//! real `4^n x 4^n` matrices, and an estimate is the inner product
//! `observable . (op_N ... op_1 . state)`. On top of that the crate provides
//!
//! * Pauli channels and general (PTM) channels with single-qubit lifting,
//! * quasi-probability inversion of noise channels, including the empirical
//!   finite-sample decomposition actually used by a sampling estimator,
//! * two Monte Carlo mitigation estimators (per-gate empirical inversion and
//!   whole-circuit concatenated sampling) plus exact inversion,
//! * a second-moment recursion that predicts the mitigation RMSE without
//!   sampling, and
//! * analytic error/overhead bounds for noisy and mitigated runs.
//!
//! Qubit `q` of a Pauli index is its `q`-th base-4 digit (0 = I, 1 = X,
//! 2 = Y, 3 = Z), so single-qubit structure is carried by digit arithmetic
//! throughout.

pub mod bounds;
pub mod channels;
pub mod mat;
pub mod pauli;
pub mod quasiprob;
pub mod simulator;

pub use mat::{CMat, Mat};
pub use pauli::{Observable, PauliIndex, PtmOperator, PtmState};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid Pauli index {code} for {qubits} qubit(s)")]
    InvalidPauliIndex { code: usize, qubits: usize },
    #[error("dense Walsh matrix is capped at 5 qubits, got {0}")]
    WalshTooLarge(usize),
    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("trace must be 1, got deviation {0:.3e}")]
    TraceNotOne(f64),
    #[error("imaginary residue {0:.3e} exceeds tolerance")]
    ImaginaryResidue(f64),
    #[error("observable spectrum outside [-1, 1]: range [{lo:.6}, {hi:.6}]")]
    SpectrumOutOfRange { lo: f64, hi: f64 },
    #[error("PTM state trace coefficient must equal 2^(-n/2), got {0:.6e}")]
    BadTraceCoeff(f64),
    #[error("vector norm bound violated: {0}")]
    NormBound(String),
    #[error("probabilities must be nonnegative and sum to 1 (deviation {0:.3e})")]
    BadProbabilities(f64),
    #[error("parameter out of range: {0}")]
    ParamRange(String),
    #[error("channel is not trace preserving (residual {0:.3e})")]
    NotTracePreserving(f64),
    #[error("channel PTM has singular value {0:.6} > 1: not contractive")]
    NotContractive(f64),
    #[error("channel is not invertible: PTM diagonal entry {value:.3e} at index {index}")]
    NotInvertible { index: usize, value: f64 },
    #[error("channel PTM is singular, cannot invert")]
    SingularChannel,
    #[error("operation basis is rank deficient: rank {rank} < {needed}")]
    RankDeficientBasis { rank: usize, needed: usize },
    #[error("expected a Pauli channel for this code path")]
    NotAPauliChannel,
    #[error("circuit has no steps matching the request: {0}")]
    EmptyCircuit(String),
    #[error("overflow computing {0}")]
    Overflow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
