use thiserror::Error;

use crate::linalg::LinalgError;
use crate::potential::AssumptionId;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("Θ at stage {stage} is not positive definite (min pivot {min_pivot:e})")]
    ThetaNotPd { stage: usize, min_pivot: f64 },
    #[error("assumption {id} violated: {detail}")]
    AssumptionViolated { id: AssumptionId, detail: String },
    #[error("R̄ shortcut disagrees with Θ − BᵀP̄B at stage {stage} (residual {residual:e})")]
    ReductionMismatch { stage: usize, residual: f64 },
    #[error("game does not have the single-actuated-row structure: {0}")]
    WrongStructure(String),
    #[error("no stabilizing gain found: {0}")]
    NotStabilizable(String),
    #[error("Nash social cost is zero")]
    ZeroNashCost,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("aggregate has no points for the requested axis")]
    EmptyAggregate,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code, used in CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Linalg(_) => "linalg",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::IndexOutOfRange(_) => "index_out_of_range",
            Error::ThetaNotPd { .. } => "theta_not_pd",
            Error::AssumptionViolated { .. } => "assumption_violated",
            Error::ReductionMismatch { .. } => "reduction_mismatch",
            Error::WrongStructure(_) => "wrong_structure",
            Error::NotStabilizable(_) => "not_stabilizable",
            Error::ZeroNashCost => "zero_nash_cost",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyAggregate => "empty_aggregate",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Stage index the failure refers to, when there is one.
    pub fn stage(&self) -> Option<usize> {
        match self {
            Error::ThetaNotPd { stage, .. } | Error::ReductionMismatch { stage, .. } => {
                Some(*stage)
            }
            _ => None,
        }
    }

    /// True for failures of the numerical contract (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Linalg(_)
                | Error::ThetaNotPd { .. }
                | Error::NotStabilizable(_)
                | Error::ReductionMismatch { .. }
                | Error::ZeroNashCost
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
