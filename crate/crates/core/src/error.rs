use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target is not a solution of Ay = b (residual {residual:e})")]
    NotASolution { residual: f64 },

    #[error("step size {alpha:e} violates ||A||^2 < 2/alpha (limit {limit:e})")]
    StepTooLarge { alpha: f64, limit: f64 },

    #[error("inner projection loop did not converge in {iters} iterations (residual {residual:e})")]
    InnerNotConverged { iters: usize, residual: f64 },

    #[error("outer vector x is zero")]
    ZeroX,

    #[error("state does not interpolate Ay = b (residual {residual:e})")]
    NotInterpolant { residual: f64 },

    #[error("1 - gamma vanished at iteration {iter} (gamma = {gamma:e})")]
    GammaSingular { iter: usize, gamma: f64 },

    #[error("initialization identities not satisfied (residual {residual:e})")]
    ConstructionFailed { residual: f64 },

    #[error("matrix is not orthogonal (defect {defect:e})")]
    NotOrthogonal { defect: f64 },

    #[error("retraction step is rank deficient")]
    SingularStep,
}

pub type Result<T> = core::result::Result<T, Error>;
