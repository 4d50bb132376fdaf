use thiserror::Error;

/// Errors produced by the dephasing toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A tabulated spectral density was evaluated outside its sample range.
    #[error("frequency {omega} outside tabulated range [{lo}, {hi}]")]
    Range { omega: f64, lo: f64, hi: f64 },

    /// Invalid model or protocol parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimate {value:e} with error {error_estimate:e} after {subdivisions} subdivisions")]
    Accuracy {
        value: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    /// An integral that is infinite for the requested bath.
    #[error("divergent quantity: {0}")]
    Divergence(String),

    /// The operation is not defined for this model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative search failed to converge.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// A generated structure would be too large.
    #[error("size limit exceeded: {0}")]
    Size(String),

    /// A sampled trace is too coarse for the requested measurement.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// I/O failure while exporting results.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
