//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Requested a driver name that is not registered.
    #[error("unknown driver `{0}`")]
    UnknownDriver(String),

    /// A configuration value is missing or out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A z-dependent driver was handed a matrix with no Cholesky factor.
    #[error("covariance argument is not symmetric positive definite")]
    DegenerateZ,

    /// The path integrator produced a non-finite state.
    #[error("simulation produced a non-finite value at step {step}")]
    SimulationBlowup { step: usize },

    /// Too few observations for the requested block size.
    #[error("insufficient data: need n >= 2c, got n={n}, c={c}")]
    InsufficientData { n: usize, c: usize },

    /// Block index outside `0..L`.
    #[error("block index {index} out of range (L={blocks})")]
    IndexOutOfRange { index: usize, blocks: usize },

    /// Incompatible dimensions between driver, data, or parameter vector.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Every realized covariance block failed the determinant test.
    #[error("all realized covariance blocks are degenerate")]
    AllDegenerate,

    /// The optimizer could not produce a finite objective anywhere.
    #[error("optimization failed: {0}")]
    OptFailure(String),

    /// Normal equations of the weighted least-squares system are singular.
    #[error("normal equations are singular")]
    SingularSystem,

    /// A linear-model operation was called on a driver without linear form.
    #[error("driver `{0}` is not linear in theta")]
    NotLinear(String),

    /// Relative error metric is undefined at theta0 = 0.
    #[error("error metric undefined: theta0 has a zero component")]
    MetricUndefined,

    /// Supplied information matrix is not positive definite.
    #[error("gamma matrix is not positive definite")]
    DegenerateGamma,
}

pub type Result<T> = std::result::Result<T, Error>;
