use thiserror::Error;

/// Errors raised by the forward models, the inference layer and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("kernel not admissible: {0}")]
    NotAdmissible(String),

    #[error("cell problem is singular on the mean-zero subspace (condition estimate {condition:.3e})")]
    SingularCellProblem { condition: f64 },

    #[error("CFL violation: transport number {number:.6} exceeds limit {limit:.6}")]
    CflViolation { number: f64, limit: f64 },

    #[error("negative density {min:.3e} at t = {time:.6} exceeds tolerance")]
    NegativeDensity { min: f64, time: f64 },

    #[error("diffusion tensor is indefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    IndefiniteDiffusion { min_eigenvalue: f64 },

    #[error("no snapshot available at measurement time {time}")]
    MissingSnapshot { time: f64 },

    #[error("posterior grids do not match: {0}")]
    GridMismatch(String),

    #[error("forward solve failed at prior node {index} {params}: {source}")]
    NodeFailure {
        index: usize,
        params: String,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep failed at epsilon = {epsilon}: {source}")]
    EpsilonFailure {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for errors produced by numerics (as opposed to bad input or i/o).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCellProblem { .. }
                | Error::CflViolation { .. }
                | Error::NegativeDensity { .. }
                | Error::IndefiniteDiffusion { .. }
                | Error::MissingSnapshot { .. }
                | Error::NodeFailure { .. }
                | Error::EpsilonFailure { .. }
                | Error::NotAdmissible(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
