//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent model configuration.
    #[error("config: {0}")]
    Config(String),

    /// Two objects that must share a shape do not.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// An index outside its valid range.
    #[error("{context}: index {index} out of range (len {len})")]
    Index {
        context: String,
        index: usize,
        len: usize,
    },

    /// A transition density evaluated to something unusable.
    #[error("density at (x={x}, s={s}, u={u}): {reason}")]
    Density {
        x: usize,
        s: usize,
        u: usize,
        reason: String,
    },

    /// A requested table would not fit in memory.
    #[error("table would require {required} elements (limit {limit})")]
    TableTooLarge { required: u128, limit: u128 },

    /// A vector that must be a probability distribution is not.
    #[error("not a probability distribution: {0}")]
    Distribution(String),

    /// An iterative solver ran out of sweeps where convergence is mandatory.
    #[error("no convergence after {iterations} sweeps (residual {residual:.3e})")]
    NonConverged { iterations: usize, residual: f64 },

    /// A belief trajectory does not cover the requested iteration count.
    #[error("belief trajectory too short: have {have}, need {need}")]
    TrajectoryTooShort { have: usize, need: usize },

    /// Exact enumeration was requested beyond its feasibility gate.
    #[error("exact enumeration gate exceeded: {0}")]
    EnumerationGate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}
