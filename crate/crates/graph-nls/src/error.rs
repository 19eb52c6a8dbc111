//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by the numerical library and the experiment harness.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A mathematical precondition on an argument was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two operands live on incompatible graphs/grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A precondition on the *state* of the data (e.g. vertex compatibility)
    /// was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested computation is numerically untrustworthy on this grid;
    /// the message carries a concrete refinement suggestion.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    /// The evolution produced non-finite samples and was aborted.
    #[error("numerical abort at t = {t}: {message}")]
    NumericalAbort { t: f64, message: String },

    /// An iteration failed to converge; carries the measured contraction.
    #[error("iteration did not converge: {0}")]
    NonConvergent(String),

    /// Configuration file / CLI parameter problems.
    #[error("config error: {0}")]
    Config(String),

    /// I/O wrapper.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias.
pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Process exit code the harness maps this error to.
    ///
    /// `2` = configuration error, `3` = numerical abort; verdict failures are
    /// not errors (the harness exits `1` for those on its own).
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_) | CoreError::Io(_) => 2,
            CoreError::NumericalAbort { .. } => 3,
            _ => 2,
        }
    }
}
