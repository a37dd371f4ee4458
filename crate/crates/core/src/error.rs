use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("vector is not tangent to ker beta (|beta(X)| = {residual:e})")]
    NotTangent { residual: f64 },
    #[error("constraint form degenerates (|V_beta| = {norm:e})")]
    DegenerateForm { norm: f64 },

    #[error("Gauss-Newton did not reach the path after {} iterations", residuals.len())]
    NoConvergence { residuals: Vec<f64> },
    #[error("path tracing did not close after {steps} steps")]
    NotClosed { steps: usize },
    #[error("grad f x grad g vanishes near {at:?}")]
    TangencyLoss { at: [f64; 3] },
    #[error("corrector failed to return to the path near {at:?}")]
    CorrectorFailure { at: [f64; 3] },
    #[error("grad f and grad g are parallel at {at:?}")]
    RankDeficient { at: [f64; 3] },
    #[error("point is {distance:e} away from the traced path")]
    OffPath { distance: f64 },

    #[error("horizontal system is singular at {at:?} (transversality lost)")]
    TransversalityLost { at: [f64; 3] },
    #[error("left the tube at {at:?}")]
    TubeExit { at: [f64; 3] },
    #[error("internal inconsistency: closed form {closed:e} vs direct {direct:e}")]
    MismatchBug { closed: f64, direct: f64 },
    #[error("base angular rate {rate:e} too small to rescale time")]
    RescaleSingular { rate: f64 },
    #[error("supremum estimate unstable across innermost annuli: {annuli:?}")]
    SupremumUnstable { annuli: Vec<f64> },
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("no return to the section within the budget")]
    NoReturn,
    #[error("section degenerate: {0}")]
    SectionDegenerate(String),

    #[error("adaptive step collapsed to {step:e} at t = {t}")]
    StepCollapse { t: f64, step: f64 },
    #[error("insufficient samples: {have} < {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("no fiber-angle chart available")]
    ChartUnavailable,
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// Numeric failures as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        !matches!(
            self,
            Error::Invalid(_)
                | Error::Expr(ExprError::Syntax { .. })
                | Error::Expr(ExprError::UnknownIdentifier { .. })
        )
    }
}
