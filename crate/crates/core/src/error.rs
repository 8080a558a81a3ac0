use thiserror::Error;

use crate::config_io::ConfigError;
use crate::subsolver::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate filter: the expected echo is identically zero")]
    DegenerateFilter,

    #[error("subproblem solver failed with status {0:?}")]
    Subsolver(SolveStatus),

    #[error("infeasible_start: no initial beamformer satisfies the SINR and power constraints")]
    InfeasibleStart,
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Subsolver(_) | Error::InfeasibleStart | Error::DegenerateFilter => 3,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
