use thiserror::Error;

use crate::numerics::RootReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("semi-latus rectum must be positive (p = {0})")]
    NonPositiveSemiLatus(f64),

    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),

    #[error("retrograde equatorial orbit cannot be represented by modified equinoctial elements")]
    RetrogradeSingularity,

    #[error("delta-v must be non-negative (got {0})")]
    NegativeDeltaV(f64),

    #[error("eclipse model enabled without an epoch")]
    EpochUnavailable,

    #[error("primer vector vanishes (|B^T lambda| = {0:e}); thrust direction undefined")]
    ZeroPrimer(f64),

    #[error("integration step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("root finder hit the iteration limit (residual {:e})", .0.residual_norm)]
    MaxIterations(Box<RootReport>),

    #[error("root finder stalled on a singular Jacobian (residual {:e})", .0.residual_norm)]
    SingularJacobian(Box<RootReport>),

    #[error("residual function returned a non-finite value")]
    NonFiniteResidual,

    #[error("linearized transfer matrix is singular")]
    SingularTransition,

    #[error("shooting did not converge: {reason} (residual {:e})", .report.residual_norm)]
    NoConvergence {
        reason: String,
        report: Box<RootReport>,
    },

    #[error("no value in the bracket meets the tolerance (best {best}, mismatch {mismatch:e})")]
    Unbracketable { best: f64, mismatch: f64 },

    #[error("continuation stalled at {stage}: {source}")]
    ContinuationStalled {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("energy-optimal solve failed for time of flight {tof} (canonical)")]
    EoFailedAt { tof: f64, source: Box<Error> },

    #[error("invalid mission field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("cannot parse mission: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn stalled(stage: impl Into<String>, source: Error) -> Self {
        Error::ContinuationStalled {
            stage: stage.into(),
            source: Box::new(source),
        }
    }

    /// Root-finder report attached to a failed shooting problem, if any.
    pub fn root_report(&self) -> Option<&RootReport> {
        match self {
            Error::MaxIterations(r) | Error::SingularJacobian(r) => Some(r),
            Error::NoConvergence { report, .. } => Some(report),
            Error::ContinuationStalled { source, .. } | Error::EoFailedAt { source, .. } => {
                source.root_report()
            }
            _ => None,
        }
    }
}
