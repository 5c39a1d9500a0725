use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CovMtError>;

#[derive(Debug, Error)]
pub enum CovMtError {
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unbounded problem: {0}")]
    Unbounded(String),

    /// Graphical lasso hit its sweep cap; carries the last precision iterate.
    #[error("graphical lasso did not converge after {iterations} sweeps (max change {residual:.3e})")]
    GlassoNotConverged {
        omega: Box<DMatrix<f64>>,
        iterations: usize,
        residual: f64,
    },

    /// Proximal gradient hit its iteration cap; carries the last coefficient iterate.
    #[error("proximal gradient did not converge after {iterations} iterations (residual {residual:.3e})")]
    BetaNotConverged {
        beta: Box<DMatrix<f64>>,
        iterations: usize,
        residual: f64,
    },

    #[error("every grid point failed: {}", .0.join("; "))]
    AllGridPointsFailed(Vec<String>),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
