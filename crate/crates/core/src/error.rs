use crate::measures::GridMeasure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measures are defined on different grids")]
    GridMismatch,

    #[error("measures have different masses ({left} vs {right})")]
    MassMismatch { left: f64, right: f64 },

    #[error("measure has zero mass")]
    ZeroMass,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel row for parents ({x}, {y}) puts no mass on the grid")]
    DegenerateRow { x: f64, y: f64 },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("no event can fire: total rate is zero at t = {time}")]
    ExtinctPopulation { time: f64 },

    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("step rejected at t = {time} after {halvings} halvings")]
    StepRejected { time: f64, halvings: u32 },

    #[error("extinction detected at t = {time} (masses {male:e}, {female:e})")]
    ExtinctionDetected { time: f64, male: f64, female: f64 },

    #[error("root finder stalled at ({m}, {f}) with residual {residual:e}")]
    ConvergenceFailure { m: f64, f: f64, residual: f64 },

    #[error("fixed-point iteration stopped after {iterations} iterations, last step {last_step:e}")]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        last_iterate: Box<GridMeasure>,
    },

    #[error("kernel violates the mean-parent condition (max error {error:e}, allowed {allowed:e})")]
    MeanConditionViolated { error: f64, allowed: f64 },

    #[error("at least 3 replicas are needed per scale, got {got} at N = {scale}")]
    InsufficientReplicas { scale: usize, got: usize },

    #[error("snapshot at t = {time} is missing")]
    MissingSnapshot { time: f64 },
}
