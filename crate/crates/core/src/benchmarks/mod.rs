//! Problem instances with known structure.

mod hyper_rep;
mod quadratic;
mod synthetic;

pub use hyper_rep::{HyperRepData, HyperRepProblem, Matrix};
pub use quadratic::QuadraticTestbed;
pub use synthetic::{closed_form_phi, closed_form_y_star, SyntheticProblem, X_LOWER, X_UPPER};

use crate::scalar::Scalar;

/// Instances whose pessimistic value function is available in closed form.
pub trait ClosedForm<T: Scalar> {
    /// `φ(x) = max_{y∈S(x)} F(x,y)`
    fn value_function(&self, x: &[T]) -> T;
    /// The worst-case lower-level response attaining `φ(x)`.
    fn worst_case_response(&self, x: &[T]) -> Vec<T>;
}

/// Instances with a known optimal pair `(x*, y*)`.
pub trait KnownOptimum<T: Scalar> {
    fn optimum(&self) -> (Vec<T>, Vec<T>);
}
