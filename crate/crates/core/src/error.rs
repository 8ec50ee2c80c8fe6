use thiserror::Error;

/// Errors raised by the gasket, functional and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested level would exceed the configured vertex cap.
    #[error("level {m} of the N={n} gasket has {vertices} vertices, above the cap of {cap}")]
    ResourceCap {
        n: usize,
        m: u32,
        vertices: u128,
        cap: usize,
    },

    /// Two functions do not live on the same gasket level.
    #[error("level mismatch: (N={0}, m={1}) vs (N={2}, m={3})")]
    LevelMismatch(usize, u32, usize, u32),

    /// The conjugate gradient solve did not reach its tolerance.
    #[error("linear solve did not converge after {iterations} iterations (relative residual {relative_residual:e})")]
    LinearSolve {
        iterations: usize,
        relative_residual: f64,
    },

    /// A dense factorization failed (singular Hessian).
    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// The mountain pass lost its barrier.
    #[error("path collapse: {0}")]
    PathCollapse(String),

    /// A pipeline step failed.
    #[error("step `{step}` failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Something that should be impossible for valid inputs happened.
    #[error("internal consistency failure: {0}")]
    Consistency(String),

    /// Expression parsing failed for a custom nonlinearity.
    #[error("invalid expression `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
