//! Recursive empirical characteristic function (ECF) identification.
//!
//! The crate estimates the parameters of Lévy increment laws and of scalar
//! ARMA systems driven by Lévy noise, one datum at a time, using stochastic
//! approximation with `1/n` gains and resetting onto a truncation domain.
//!
//! - [`noise`]: Gaussian, variance gamma and normal inverse Gaussian increment
//!   families with closed-form characteristic functions, gradients and samplers.
//! - [`ecf`]: frequency grids, ECF scores, the `C` covariance matrix, weighting
//!   matrices and the closed-form asymptotic covariances.
//! - [`arma`]: ARMA simulation, the innovation (inverse) filter with parameter
//!   sensitivities, and the stability margin.
//! - [`estimators`]: the resetting recursion engine and the three recursive
//!   algorithms (i.i.d. ECF, known-noise system ECF, three-stage joint).
//! - [`ode`]: associated ODE right-hand sides, RK4 integration, Jacobians,
//!   long-run correction covariance and the Lyapunov equation.
//! - [`offline`]: batch Gauss–Newton baselines used as cross-checks.
//! - [`experiment`]: configuration files, Monte Carlo replication and the
//!   command implementations behind the `recursive-ecf` binary.

pub mod arma;
pub mod ecf;
mod error;
pub mod estimators;
pub mod experiment;
pub(crate) mod linalg;
pub mod noise;
pub mod ode;
pub mod offline;

pub use error::{Error, Result};
pub use num_complex::Complex64;
