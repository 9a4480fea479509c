//! Stochastic inexact ADMM (SI-ADMM) for
//! `min E[f(x, xi)] + E[g(y, xi)]  s.t.  Ax + By = b`.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]. The `f64` aliases at the bottom of this file are what most callers want.

pub mod baselines;
pub mod bounds;
pub mod error;
pub mod exact_admm;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod sa;
pub mod si_admm;
pub mod synthetic;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use problem::{
    GComponent, GMetric, GradientOracle, Iterate, KktPoint, ProblemConstants, ProxOperator,
    StochasticProblem,
};
pub use rng::{SeedKey, Stream, RNG_VERSION};
pub use sa::{compute_rate_constants, q_bound, sa_run, QBound, SaRateConstants};
pub use si_admm::{
    derive_constants, sample_schedule, si_admm_step, si_admm_step_exact_y, solve, solve_with,
    AlgorithmConfig, DerivedConstants, RunRecord, RunRow,
};

/// Double precision problem.
pub type Problem = StochasticProblem<f64>;
/// Double precision iterate `(x, y, lambda)`.
pub type IterateF64 = Iterate<f64>;
/// Double precision algorithm configuration.
pub type Config = AlgorithmConfig<f64>;
/// Double precision run record.
pub type Record = RunRecord<f64>;
/// Double precision bound certificate.
pub type Certificate = bounds::BoundCertificate<f64>;
/// Double precision LASSO instance.
pub type Lasso = synthetic::LassoInstance<f64>;
/// Double precision distributed regression instance.
pub type DistReg = synthetic::DistRegInstance<f64>;
/// Double precision quadratic instance.
pub type Quadratic = exact_admm::QuadraticInstance<f64>;
