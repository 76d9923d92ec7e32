use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value encountered: {0}")]
    Domain(String),

    /// QR iteration did not converge; `found` holds the eigenvalues that did deflate.
    #[error("eigenvalue iteration did not converge after {iterations} iterations ({} of {n} found)", found.len())]
    Convergence {
        iterations: usize,
        n: usize,
        found: Vec<Complex64>,
    },

    #[error("matrix is not positive definite (pivot {pivot:.3e} in block {block})")]
    NotSpd { block: usize, pivot: f64 },

    #[error("LTV fit is rank deficient ({0}); use a positive smoothness weight or ridge term")]
    RankDeficient(String),

    #[error("state diverged at step {step} (norm {norm:.3e})")]
    Divergence { step: usize, norm: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("index {index} out of range (length {len})")]
    Index { index: usize, len: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
