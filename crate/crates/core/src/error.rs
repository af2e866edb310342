use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The series in the Hilbert-Schmidt admissibility check does not converge.
    #[error("series diverges: sum of k^({exponent}) over k >= 1")]
    Divergent { exponent: f64 },

    /// Newton failed to solve one implicit step.
    #[error("newton failed at step {step}: residual {residual:e} after {iterations} iterations")]
    StepFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    /// A Monte Carlo sample failed while integrating one resolution.
    #[error("sample {sample} at resolution exponent {exponent}: {source}")]
    Sample {
        sample: u64,
        exponent: u32,
        #[source]
        source: Box<Error>,
    },

    /// A rejected config entry; `line` is 0 when the key is absent.
    #[error("{}", config_message(key, *line, message))]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(key: &str, line: usize, message: &str) -> String {
    match line {
        0 => format!("config key `{key}`: {message}"),
        _ => format!("config line {line}: key `{key}`: {message}"),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
