use crate::error::{Error, Result};
use crate::problem::{BilevelProblem, ProjectableSet};
use crate::scalar::Scalar;

use super::{ClosedForm, KnownOptimum};

/// Scalar instance `F(x,y) = −(y−x)²`, `f(x,y) = (y−x)²`.
///
/// The lower level has the single solution `y = x`, so the pessimistic value
/// function is identically zero, and for fixed `(x, ρ, σ)` the saddle of `ψ`
/// solves a 2×2 linear system. `X` defaults to the whole line; a box can be
/// imposed with [`QuadraticTestbed::with_x_box`].
#[derive(Debug, Clone)]
pub struct QuadraticTestbed<T> {
    set_x: ProjectableSet<T>,
    set_y: ProjectableSet<T>,
}

impl<T: Scalar> Default for QuadraticTestbed<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> QuadraticTestbed<T> {
    pub fn new() -> Self {
        Self {
            set_x: ProjectableSet::full_space(1),
            set_y: ProjectableSet::full_space(1),
        }
    }

    pub fn with_x_box(lo: T, hi: T) -> Result<Self> {
        Ok(Self {
            set_x: ProjectableSet::uniform_box(1, lo, hi)?,
            set_y: ProjectableSet::full_space(1),
        })
    }

    /// Exact saddle `(y*, z*)` of `ψ_{ρ,σ}(x, ·, ·)` over `ℝ × ℝ`, solving
    ///
    /// ```text
    /// −2(1+ρ)(y−x) − σz = 0
    ///  2ρ(z−x) + σz − σy = 0
    /// ```
    pub fn analytic_saddle(x: T, rho: T, sigma: T) -> Result<(T, T)> {
        let two = T::two();
        let a11 = -two * (T::one() + rho);
        let a12 = -sigma;
        let a21 = -sigma;
        let a22 = two * rho + sigma;
        let b1 = a11 * x;
        let b2 = two * rho * x;
        let det = a11 * a22 - a12 * a21;
        if det == T::zero() || !det.is_finite() {
            return Err(Error::Contract(format!(
                "singular saddle system for rho = {rho}, sigma = {sigma}"
            )));
        }
        let y = (b1 * a22 - a12 * b2) / det;
        let z = (a11 * b2 - a21 * b1) / det;
        Ok((y, z))
    }
}

impl<T: Scalar> BilevelProblem<T> for QuadraticTestbed<T> {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn upper(&self, x: &[T], y: &[T]) -> T {
        let d = y[0] - x[0];
        -(d * d)
    }
    fn upper_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        vec![T::two() * (y[0] - x[0])]
    }
    fn upper_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        vec![-T::two() * (y[0] - x[0])]
    }
    fn lower(&self, x: &[T], y: &[T]) -> T {
        let d = y[0] - x[0];
        d * d
    }
    fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        vec![-T::two() * (y[0] - x[0])]
    }
    fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        vec![T::two() * (y[0] - x[0])]
    }
    fn set_x(&self) -> &ProjectableSet<T> {
        &self.set_x
    }
    fn set_y(&self) -> &ProjectableSet<T> {
        &self.set_y
    }
    fn mu(&self) -> T {
        T::two()
    }
    fn lip_upper(&self) -> T {
        T::two()
    }
    fn lip_lower(&self) -> T {
        T::two()
    }
}

impl<T: Scalar> ClosedForm<T> for QuadraticTestbed<T> {
    fn value_function(&self, _x: &[T]) -> T {
        T::zero()
    }
    fn worst_case_response(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
}

impl<T: Scalar> KnownOptimum<T> for QuadraticTestbed<T> {
    /// Every `x` is optimal (`φ ≡ 0`); the origin is reported as the reference point.
    fn optimum(&self) -> (Vec<T>, Vec<T>) {
        (vec![T::zero()], vec![T::zero()])
    }
}
