use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown model `{0}` (expected circle_double_well, single_well_rotational or pure_gradient)")]
    UnknownModel(String),

    #[error("non-finite field evaluation at ({x}, {y})")]
    NonFiniteField { x: f64, y: f64 },

    #[error("integrator failure: non-finite state at step {step}")]
    IntegratorFailure { step: usize },

    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    UnstableStep { dt: f64, dt_max: f64 },

    #[error("{failed} of {total} trajectories failed (limit 0.1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("horizon T = {t} is shorter than the construction threshold T0 = {t0}")]
    HorizonTooShort { t: f64, t0: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Perron vector lost positivity (min/max = {min_ratio:e})")]
    PositivityLoss { min_ratio: f64 },

    #[error("grid too large: {points} points exceeds the memory guard of 400000")]
    GridTooLarge { points: usize },

    #[error("too few usable points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("grid is not symmetric about zero")]
    AsymmetricGrid,

    #[error("degenerate path: {0}")]
    DegeneratePath(String),
}

pub type Result<T> = std::result::Result<T, Error>;
