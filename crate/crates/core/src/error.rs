use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("epsilon0 must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("invalid training set: {0}")]
    InvalidTraining(String),

    #[error("outcome at round {round} lies outside the domain")]
    OutsideDomain { round: usize },

    #[error("collateral violated at round {round}: 1 + alpha.x = {value}")]
    Collateral { round: usize, value: f64 },

    #[error(
        "solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})"
    )]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("solver failed at round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(&'static str),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid too coarse: step {index} moves the return by {norm:.3e} > 2*delta = {limit:.3e}; sample the path more finely")]
    GridTooCoarse { index: usize, norm: f64, limit: f64 },

    #[error("invalid price data: {0}")]
    InvalidPrices(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario `{scenario}` failed: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_round(self, round: usize) -> Self {
        match self {
            e @ (Error::Round { .. } | Error::Collateral { .. } | Error::OutsideDomain { .. }) => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
