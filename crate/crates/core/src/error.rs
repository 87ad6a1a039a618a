use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point is on or outside the barrier boundary")]
    Boundary,
    #[error("matrix is numerically singular (smallest eigenvalue {0:e})")]
    Singularity(f64),
    #[error("point lies outside the feasible set: {0}")]
    Domain(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("played action of player {player} is infeasible")]
    Feasibility { player: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("feature index {index} exceeds configured dimension {dim} on line {line}")]
    Dimension { index: usize, dim: usize, line: usize },
    #[error("missing table cell: {0}")]
    MissingCell(String),
    #[error("insufficient data for rate fit: {0}")]
    InsufficientData(String),
    #[error("trial {trial}, round {round}: {source}")]
    Run {
        trial: usize,
        round: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn at(self, trial: usize, round: u64) -> Self {
        Error::Run {
            trial,
            round,
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Param(_)
            | Error::Parse { .. }
            | Error::Dimension { .. }
            | Error::Io(_)
            | Error::MissingCell(_) => true,
            Error::Run { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
