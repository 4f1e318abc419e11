use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The argument is valid mathematically but outside what this build evaluates.
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    /// The requested accuracy cannot be guaranteed at these inputs.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// A configured resource cap (grid steps, jumps per path) was exceeded.
    #[error("resource limit exceeded: {what} (cap {cap})")]
    Resource { what: String, cap: u64 },

    /// Iterative numerical method failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: achieved {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// Input file could not be read or parsed.
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
