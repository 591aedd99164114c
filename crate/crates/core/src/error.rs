use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or table lengths do not agree.
    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// A model or distribution failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// The behavior-induced state chain has no reachable stationary distribution.
    #[error("state chain did not reach a stationary distribution within {sweeps} sweeps")]
    NonErgodic { sweeps: usize },

    /// Random instance generation kept producing unusable models.
    #[error("instance generation failed after {attempts} attempts: {last}")]
    Generation { attempts: usize, last: String },

    /// NaN or infinity appeared during a computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The brute-force oracle was asked to enumerate too many policies.
    #[error("instance too large for exhaustive search: {policies} policies (limit {limit})")]
    Capacity { policies: f64, limit: usize },

    /// Inconsistent configuration, e.g. norm weights that do not match `D`.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested norm order does not make `alpha * n^(1/p)` smaller than one.
    #[error("p = {p} is not admissible (alpha * n^(1/p) >= 1); minimum admissible even p: {min_p}")]
    InvalidP { p: u32, min_p: u32 },

    /// An integrated trajectory left the bounded region.
    #[error("trajectory diverged at t = {t}: state norm {norm:e}")]
    Divergence { t: f64, norm: f64 },

    /// A checked property did not hold.
    #[error("property violation: {0}")]
    PropertyViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
