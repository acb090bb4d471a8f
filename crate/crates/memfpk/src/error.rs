//! Crate-wide error type with stable process exit codes.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad field values, cross-field inconsistencies,
    /// unknown identifiers.
    #[error("config error: {0}")]
    Config(String),

    /// An argument lies outside the mathematical domain of an operation
    /// (e.g. a Hurst index outside its admissible interval).
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical failure at run time: CFL violation, divergent paths above
    /// threshold, non-finite values, non-convergent quadrature.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A required input artifact (ensemble dump, coefficient files) is absent.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 0 is success, 2 config/domain errors,
    /// 3 numerical failures, 4 missing inputs, 1 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Numerical(_) => 3,
            Error::MissingInput(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
