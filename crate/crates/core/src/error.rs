use thiserror::Error;

use crate::optimizer::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid Laplacian: {0}")]
    InvalidLaplacian(String),

    /// The symmetric eigensolver did not converge.
    #[error("eigensolver did not converge on a {n}x{n} matrix (max |entry| = {max_abs:.3e})")]
    EigenFailure { n: usize, max_abs: f64 },

    #[error("Laplacian is singular beyond its constant null vector: lambda_2 = {lambda2:.3e}")]
    Singular { lambda2: f64 },

    #[error("effective resistance is infinite: {0}")]
    InfiniteResistance(String),

    /// A non-finite objective or gradient showed up at an accepted iterate.
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        trace: Box<SolveTrace>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0} is not implemented")]
    NotImplemented(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::NotImplemented(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io(_) => 3,
            Error::InvalidLaplacian(_)
            | Error::EigenFailure { .. }
            | Error::Singular { .. }
            | Error::InfiniteResistance(_)
            | Error::NonFinite { .. } => 4,
        }
    }
}
