use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{family} has no finite moment of order {order}")]
    UnsupportedMoment { family: &'static str, order: u32 },

    #[error("expected a {expected} distribution")]
    ObservationKind { expected: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("quadrature did not reach tolerance (estimate {estimate}, error {error:e})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("point {0:?} lies outside the tabulated grid")]
    OutsideGrid(Vec<f64>),

    #[error("battery is singular (condition number {condition:e})")]
    SingularBattery { condition: f64 },

    #[error("inconsistent pair: held-out residual {residual:e} exceeds {tol:e}")]
    InconsistentPair { residual: f64, tol: f64 },

    #[error("degenerate simplex (volume {volume:e})")]
    DegenerateSimplex { volume: f64 },

    #[error("solver did not converge (residual {residual:e})")]
    NonConverged { residual: f64 },

    #[error("no sign change of the empirical moment in the action domain")]
    EmptyRoot,

    #[error("moment system is not square ({moments} moments for {parameters} parameters)")]
    Underdetermined { moments: usize, parameters: usize },

    #[error("moment covariance is singular (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("insufficient data: n = {n} but need more than {k}")]
    InsufficientData { n: usize, k: usize },
}
