use thiserror::Error;

/// Errors produced by the solvers, the oracle and the run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid problem data or run option. `field` names the offending input.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// A computation diverged or failed to converge. `time` is the
    /// simulated time of the failure when the failing routine marches in time.
    #[error("numerical failure in {context}{}: {message}", time.map(|t| format!(" at t={t}")).unwrap_or_default())]
    Numerical {
        context: String,
        message: String,
        time: Option<f64>,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A verification check ran to completion but exceeded its tolerance.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
            time: None,
        }
    }

    pub fn numerical_at(context: impl Into<String>, message: impl Into<String>, time: f64) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
            time: Some(time),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) | Error::Io { .. } => 1,
            Error::Numerical { .. } | Error::DegenerateFit(_) => 2,
            Error::Verification(_) => 3,
        }
    }
}
