use thiserror::Error;

/// Errors reported by the library.
///
/// The variants map onto the CLI exit codes: [`Error::Domain`] and
/// [`Error::Singular`] are domain errors (2), [`Error::Numerical`] is a
/// numerical failure (3), [`Error::Input`] is a usage error (1).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular beta: {0}")]
    Singular(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 1,
            Error::Singular(_) | Error::Domain(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}
