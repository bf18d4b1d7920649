use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A threshold curve does not cross the requested level inside its grid.
    #[error("{0}")]
    Range(String),

    #[error("hyperperiod of {quanta} time quanta exceeds the simulation cap of {cap}")]
    HyperperiodTooLarge { quanta: u128, cap: u64 },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
