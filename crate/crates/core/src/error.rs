use thiserror::Error;

/// Errors raised by the modelling pipeline.
///
/// Every variant names the stage that failed; the CLI maps
/// [`Error::is_numerical`] to a distinct exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signal-io: {0}")]
    Input(String),

    #[error("signal-io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{module}: invalid parameter `{param}`: {reason}")]
    InvalidParameter {
        module: &'static str,
        param: &'static str,
        reason: String,
    },

    #[error("decomposition: no usable pulses ({total} segmented, all excluded)")]
    NoUsablePulses { total: usize },

    #[error("{module}: numerical failure: {reason}")]
    Numerical { module: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(module: &'static str, param: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            param,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            module,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
