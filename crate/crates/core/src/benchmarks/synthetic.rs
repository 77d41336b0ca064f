use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{BilevelProblem, ProjectableSet};
use crate::scalar::Scalar;

use super::{ClosedForm, KnownOptimum};

/// Synthetic pessimistic instance with a closed-form value function:
///
/// ```text
/// F(x,y) = (1/n)‖x − e‖² − ‖y − e‖²
/// f(x,y) = (⟨e,y⟩ − ‖x‖)²
/// X = [0.1, 10]ⁿ,   Y = [1/(2√n), ∞)ⁿ
/// ```
///
/// For `n ≥ 2` the unique optimum is `(e/2, e/(2√n))`.
#[derive(Debug, Clone)]
pub struct SyntheticProblem<T> {
    n: usize,
    set_x: ProjectableSet<T>,
    set_y: ProjectableSet<T>,
    lip_lower: T,
}

pub const X_LOWER: f64 = 0.1;
pub const X_UPPER: f64 = 10.0;

impl<T: Scalar> SyntheticProblem<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Contract(format!(
                "synthetic problem needs n >= 2 for a unique optimum, got {n}"
            )));
        }
        let nf = T::from_usize(n).unwrap();
        let y_lower = T::one() / (T::two() * nf.sqrt());
        // ∇²f = 2ww' − (2g/‖x‖)(I − x̂x̂') on the x-block, with w = (−x̂, e);
        // |g| ≤ 3n^{3/2} for y ≤ 3√n and ‖x‖ ≥ 0.1√n on X.
        let lip_lower = T::two() * (nf + T::one()) + T::lit(60.0) * nf;
        Ok(Self {
            n,
            set_x: ProjectableSet::uniform_box(n, T::lit(X_LOWER), T::lit(X_UPPER))?,
            set_y: ProjectableSet::uniform_box(n, y_lower, T::infinity())?,
            lip_lower,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn nf(&self) -> T {
        T::from_usize(self.n).unwrap()
    }

    /// Lower bound of each `y` component, `1/(2√n)`.
    pub fn y_floor(&self) -> T {
        T::one() / (T::two() * self.nf().sqrt())
    }

    fn gap(&self, x: &[T], y: &[T]) -> (T, T) {
        let nx = linalg::norm(x);
        (linalg::sum(y) - nx, nx)
    }

    /// Initial point drawn as `x⁰ ~ U[0.1, 10]ⁿ`, `y⁰ ~ U[1/(2√n), 10]ⁿ`,
    /// with `z⁰ = y⁰`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Vec<T>, Vec<T>) {
        let lo_y = self.y_floor().as_f64();
        let x: Vec<T> = (0..self.n)
            .map(|_| T::lit(rng.random_range(X_LOWER..X_UPPER)))
            .collect();
        let y: Vec<T> = (0..self.n)
            .map(|_| T::lit(rng.random_range(lo_y..10.0)))
            .collect();
        let z = y.clone();
        (x, y, z)
    }
}

/// `y*(x) = (‖x‖/n)·e` when `‖x‖ > √n/2`, otherwise `e/(2√n)`.
pub fn closed_form_y_star<T: Scalar>(x: &[T], n: usize) -> Vec<T> {
    let nf = T::from_usize(n).unwrap();
    let nx = linalg::norm(x);
    let level = if nx > nf.sqrt() * T::half() {
        nx / nf
    } else {
        T::one() / (T::two() * nf.sqrt())
    };
    vec![level; n]
}

/// Closed-form pessimistic value function `(1/n)‖x − e‖² − ‖y*(x) − e‖²`.
pub fn closed_form_phi<T: Scalar>(x: &[T], n: usize) -> T {
    let nf = T::from_usize(n).unwrap();
    let ones = vec![T::one(); n];
    let y = closed_form_y_star(x, n);
    linalg::dist_sq(x, &ones) / nf - linalg::dist_sq(&y, &ones)
}

impl<T: Scalar> BilevelProblem<T> for SyntheticProblem<T> {
    fn dim_x(&self) -> usize {
        self.n
    }
    fn dim_y(&self) -> usize {
        self.n
    }
    fn upper(&self, x: &[T], y: &[T]) -> T {
        let mut ax = T::zero();
        for &xi in x {
            ax = ax + (xi - T::one()) * (xi - T::one());
        }
        let mut ay = T::zero();
        for &yi in y {
            ay = ay + (yi - T::one()) * (yi - T::one());
        }
        ax / self.nf() - ay
    }
    fn upper_grad_x(&self, x: &[T], _y: &[T]) -> Vec<T> {
        let c = T::two() / self.nf();
        x.iter().map(|&xi| c * (xi - T::one())).collect()
    }
    fn upper_grad_y(&self, _x: &[T], y: &[T]) -> Vec<T> {
        y.iter().map(|&yi| -T::two() * (yi - T::one())).collect()
    }
    fn lower(&self, x: &[T], y: &[T]) -> T {
        let (g, _) = self.gap(x, y);
        g * g
    }
    fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        let (g, nx) = self.gap(x, y);
        assert!(
            nx >= T::lit(0.05),
            "synthetic lower-level gradient needs ‖x‖ >= 0.05, got {nx}"
        );
        let c = -T::two() * g / nx;
        x.iter().map(|&xi| c * xi).collect()
    }
    fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        let (g, _) = self.gap(x, y);
        vec![T::two() * g; self.n]
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
        self.lip_lower
    }
}

impl<T: Scalar> ClosedForm<T> for SyntheticProblem<T> {
    fn value_function(&self, x: &[T]) -> T {
        closed_form_phi(x, self.n)
    }
    fn worst_case_response(&self, x: &[T]) -> Vec<T> {
        closed_form_y_star(x, self.n)
    }
}

impl<T: Scalar> KnownOptimum<T> for SyntheticProblem<T> {
    fn optimum(&self) -> (Vec<T>, Vec<T>) {
        (vec![T::half(); self.n], vec![self.y_floor(); self.n])
    }
}
