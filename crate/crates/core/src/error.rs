use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficient function h_{index} is not finite at s = {s}")]
    Evaluation { index: usize, s: Complex64 },

    #[error("pencil is numerically singular at s = {s} (rcond = {rcond:e})")]
    Singular { s: Complex64, rcond: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("simulation became unstable at step {step} (t = {t})")]
    Instability { step: usize, t: f64 },

    #[error("input carries no excitation at any frequency")]
    NoExcitation,

    #[error("input has no excitation at Fourier index {k}")]
    MissingExcitation { k: usize },

    #[error("least-squares problem is degenerate: every singular value was truncated")]
    Degenerate,

    #[error("insufficient data: {got} points available, at least {needed} required")]
    InsufficientData { needed: usize, got: usize },

    #[error("interpolation value at index {index} is zero")]
    ZeroValue { index: usize },

    #[error("Haar condition violated for entry ({i}, {j}) (rcond = {rcond:e})")]
    HaarViolation { i: usize, j: usize, rcond: f64 },

    #[error("realification left imaginary residue {residue:e} (allowed {allowed:e})")]
    RealnessViolation { residue: f64, allowed: f64 },

    #[error(
        "truncation unsafe: rank at pivot {pivot_rank}, row-stacked rank {row_rank}, column-stacked rank {col_rank}"
    )]
    TruncationUnsafe {
        pivot_rank: usize,
        row_rank: usize,
        col_rank: usize,
    },

    #[error("interpolation check failed: max relative deviation {deviation:e} exceeds {tol:e}")]
    Verification { deviation: f64, tol: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
