//! Drift parameter estimation for ergodic diffusions and backward SDEs
//! whose volatility process is unobserved and nonparametric.
//!
//! The observed pair `(X, Y)` is sampled on a uniform grid with step `h`.
//! `Y` follows `dY_t = psi(X_t, Y_t, V_t V_t^T, theta0) dt + V_t dW_t` for a
//! known driver `psi` and an unknown matrix process `V`. The grid is split
//! into blocks of `c` intervals; each block's realized covariance of `Y`
//! increments stands in for `V V^T` when weighting the next block's drift
//! residual in a Gaussian quasi-log-likelihood, which is then maximized
//! over a parameter box. Under power-law schedules `h = n^{-0.05 l}`,
//! `c = n^{0.05 k}` with admissible `(l, k)`, the estimator is consistent
//! and `sqrt(n h) (theta_hat - theta0)` is asymptotically centered normal
//! with covariance `Gamma^{-1}`.
//!
//! Modules:
//!
//! * [`driver`] — driver functions `psi` and the parameter box;
//! * [`sim`] — scenario simulators with deterministic seeded streams;
//! * [`blocks`] — block partition and realized block covariances;
//! * [`likelihood`] — quasi-log-likelihood, derivatives, plug-in
//!   information matrix, and the closed-form linear oracle;
//! * [`optimize`] — projected Newton maximization over the box;
//! * [`rates`] — `(l, k)` schedules and their admissibility rules;
//! * [`experiment`] — Monte Carlo replication harness and summaries;
//! * [`config`] — the JSON run-configuration document.

pub mod blocks;
pub mod config;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod linalg;
pub mod optimize;
pub mod rates;
pub mod rng;
pub mod sim;

pub use blocks::{build_blocks, realized_block_cov, BlockScheme, RealizedBlockCov};
pub use driver::{builtin_driver, DriverSpec, ThetaBox};
pub use error::{Error, Result};
pub use experiment::{
    error_table, mae_curve, normality_summary, run_replications, ExperimentConfig,
    ReplicationResult,
};
pub use likelihood::{closed_form_linear, gamma_plugin, quasi_loglik, QuasiLikEval, QuasiLikProblem};
pub use optimize::{maximize_quasi_lik, EstimationResult, OptimizerOptions};
pub use rates::{check_rate_conditions, schedule, RateSchedule};
pub use rng::{derive_seed, GaussianStream};
pub use sim::{
    simulate_cir_full_truncation, simulate_scenario, simulate_vasicek_exact, ObservationRecord,
    ScenarioSpec,
};

/// Crate version, echoed into run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
