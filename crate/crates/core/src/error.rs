use thiserror::Error;

/// Errors raised by the construction and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix is singular (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    Singular { pivot: f64, threshold: f64 },

    #[error("entry ({row}, {col}) is numerically zero; Hadamard inverse undefined")]
    ZeroEntry { row: usize, col: usize },

    #[error("tr(VW) = {0:.3e} is numerically zero; the V-W condition degenerates")]
    DegenerateTrace(f64),

    #[error("matrix fails the generalized Hadamard property (residual {0:.3e})")]
    NotHadamard(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid block plan: {0}")]
    InvalidPlan(String),

    #[error("nilpotent block needs 2m <= t, got t = {t}, m = {m}")]
    BadShape { t: usize, m: usize },

    #[error("involution block size must be even, got {0}")]
    OddSize(usize),

    #[error("eigenvalue split is degenerate: s = {s} equals 2 m' = {}", 2 * m_prime)]
    DegenerateSplit { s: usize, m_prime: usize },

    #[error("B^t A is not invertible")]
    SingularCross,

    #[error("Gauss-Newton failed after {restarts} restarts (best residual {best:.3e})")]
    NewtonFail { restarts: usize, best: f64 },

    #[error("scaling coefficient |nu + 2q| / |q| = {0:.3e} vanishes; nonzero-d blocks are not rescalable")]
    DegenerateCoefficient(f64),

    #[error("numeric rank changed under step halving ({coarse} vs {fine}); sample is not generic")]
    RankUnstable { coarse: usize, fine: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid job configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, Error>;
