//! Error type shared across the simulator.

use thiserror::Error;

/// Errors raised by simulator operations.
#[derive(Debug, Error)]
pub enum SimError {
    /// A physical or structural invariant on an input was violated.
    #[error("invalid {field}: {reason}")]
    Domain {
        /// Dotted path of the offending field, e.g. `laser.pulse_energy_j`.
        field: String,
        /// What was wrong with the value.
        reason: String,
    },

    /// Configuration file problem (missing key, bad value, unknown section).
    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    /// Numerical quadrature did not reach the requested tolerance within the
    /// evaluation budget.
    #[error(
        "quadrature failed to converge: relative error {achieved:.3e} after {evaluations} \
         evaluations (budget {budget})"
    )]
    NonConvergence {
        achieved: f64,
        evaluations: usize,
        budget: usize,
    },

    /// Grid dimensions disagree.
    #[error("dimension mismatch: {context} ({left_rows}x{left_cols} vs {right_rows}x{right_cols})")]
    DimensionMismatch {
        context: String,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// File parsing failure with location.
    #[error("parse error in {path} at line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// File format/version not understood by this build.
    #[error("unsupported format in {path}: {reason}")]
    Format { path: String, reason: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn domain(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Domain {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;
