//! Pessimistic bilevel optimization through a smooth penalty-regularization
//! surrogate of the value function, solved with a single-loop projected
//! gradient method.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The type
//! aliases at the crate root fix `f64` for the common case.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod saddle;
pub mod scalar;
pub mod schedule;
pub mod smooth;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{BilevelProblem, Counting, GradientReport};
pub use scalar::Scalar;
pub use smooth::PenaltyReg;

pub type ProjectableSet = problem::ProjectableSet<f64>;
pub type ScheduleParams = schedule::ScheduleParams<f64>;
pub type StepParams = schedule::StepParams<f64>;
pub type IterateState = solver::IterateState<f64>;
pub type RunSummary = solver::RunSummary<f64>;
pub type BaselineOptions = solver::BaselineOptions<f64>;
pub type BaselineSummary = solver::BaselineSummary<f64>;
pub type SaddleOptions = saddle::SaddleOptions<f64>;
pub type SaddlePoint = saddle::SaddlePoint<f64>;
pub type MeritCoefficients = diagnostics::MeritCoefficients<f64>;
pub type DiagnosticsRecord = diagnostics::DiagnosticsRecord<f64>;
pub type SyntheticProblem = benchmarks::SyntheticProblem<f64>;
pub type QuadraticTestbed = benchmarks::QuadraticTestbed<f64>;
pub type HyperRepData = benchmarks::HyperRepData<f64>;
pub type HyperRepProblem = benchmarks::HyperRepProblem<f64>;
