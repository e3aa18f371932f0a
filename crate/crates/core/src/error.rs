use thiserror::Error;

use crate::simulation::RolloutResult;
use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("finite-difference step h = {h:e} is too small: {detail}")]
    StepTooSmall { h: f64, detail: String },

    #[error("barrier of obstacle {index} produced non-finite derivatives")]
    BarrierOverflow { index: usize },

    #[error("degenerate point set: {0}")]
    Degenerate(String),

    #[error("line search failed with regularization exhausted after {} iterations", .report.iterations)]
    LineSearch { report: Box<SolveReport> },

    #[error("S_t = R + B'P B is not positive definite at t = {t}")]
    NotPositiveDefinite { t: usize },

    #[error("trajectory carries no cached ILQG gains")]
    MissingGains,

    #[error("solver failed at step {step}: {source}")]
    Rollout {
        step: usize,
        #[source]
        source: Box<Error>,
        partial: Option<Box<RolloutResult>>,
    },

    #[error("run with seed {seed} failed: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { context, expected, got })
    }
}
