//! Error taxonomy shared across the crate.

/// Crate-wide error type.
///
/// Variants map to exit codes in the CLI: usage-class errors (bad arguments,
/// malformed config or target specs) exit with 1, runtime-class errors
/// (diverged simulations, failed oracles, I/O) exit with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed caller input: bad target spec, inconsistent shapes, invalid
    /// parameter ranges.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Config-file problem, reported with the offending line number.
    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    /// Command-line usage problem.
    #[error("usage error: {0}")]
    Usage(String),

    /// A simulated state became non-finite; reports the Euler–Maruyama step.
    #[error("simulation diverged at step {step}: {msg}")]
    Simulation { step: usize, msg: String },

    /// Non-finite loss or gradient during training; reports the gradient step.
    #[error("training failed at step {step}: {msg}")]
    Training { step: usize, msg: String },

    /// A reference-statistics oracle failed to converge.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// Evaluation-stage failure (e.g. target/checkpoint mismatch).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Malformed or truncated checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code class: 1 for usage-type errors, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } | Error::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
