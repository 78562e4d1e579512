use std::io;

use thiserror::Error;

/// Errors produced by the forward model, the samplers and the experiment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the set on which the operation is defined
    /// (non-positive permeability, inadmissible geometry, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative or direct numerical method failed.
    #[error("numerical error after {iterations} iterations: {message}")]
    Numerical { message: String, iterations: usize },

    /// The request exceeds what this implementation supports (e.g. dense
    /// covariance on too fine a grid).
    #[error("capability error: {0}")]
    Capability(String),

    /// Two inputs that must agree in shape do not.
    #[error("size mismatch: {0}")]
    Shape(String),

    /// Invalid experiment or sampler configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An artifact was produced by a different configuration or has the wrong layout.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A required artifact is missing.
    #[error("missing artifact: {0}")]
    Missing(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Prefixes the message with context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Numerical { message, iterations } => Error::Numerical {
                message: format!("{ctx}: {message}"),
                iterations,
            },
            Error::Capability(m) => Error::Capability(format!("{ctx}: {m}")),
            Error::Shape(m) => Error::Shape(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Schema(m) => Error::Schema(format!("{ctx}: {m}")),
            Error::Missing(m) => Error::Missing(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
