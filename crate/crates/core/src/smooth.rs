//! The penalized and regularized saddle objective
//!
//! ```text
//! ψ(x, y, z) = F(x,y) − ρ·(f(x,y) − f(x,z)) + (σ/2)·‖z‖² − σ·⟨y, z⟩
//! ```
//!
//! together with its partial gradients, which double as the update
//! directions of the single-loop solver. `ψ` is strongly concave in `y` and
//! strongly convex in `z`; its saddle value over `Y × Y` is the smooth
//! surrogate `φ_{ρ,σ}(x)` of the pessimistic value function.

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::BilevelProblem;
use crate::scalar::Scalar;

/// Penalty `ρ` on the lower-level value gap and regularization weight `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyReg<T> {
    pub rho: T,
    pub sigma: T,
}

impl<T: Scalar> PenaltyReg<T> {
    pub fn new(rho: T, sigma: T) -> Result<Self> {
        if !(rho > T::zero() && rho.is_finite()) {
            return Err(Error::Contract(format!("rho must be positive and finite, got {rho}")));
        }
        if !(sigma > T::zero() && sigma.is_finite()) {
            return Err(Error::Contract(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(Self { rho, sigma })
    }
}

fn check_point<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<()> {
    check_dim("x", problem.dim_x(), x.len())?;
    check_dim("y", problem.dim_y(), y.len())?;
    check_dim("z", problem.dim_y(), z.len())
}

fn point_of<T: Scalar>(parts: &[&[T]]) -> Vec<f64> {
    parts.iter().flat_map(|p| linalg::to_f64_vec(p)).collect()
}

fn finite_scalar<T: Scalar>(v: T, what: &'static str, parts: &[&[T]]) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what,
            point: point_of(parts),
        })
    }
}

fn finite_vec<T: Scalar>(v: Vec<T>, what: &'static str, parts: &[&[T]]) -> Result<Vec<T>> {
    if linalg::all_finite(&v) {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what,
            point: point_of(parts),
        })
    }
}

pub fn eval_psi<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<T> {
    check_point(problem, x, y, z)?;
    let upper = problem.upper(x, y);
    let gap = problem.lower(x, y) - problem.lower(x, z);
    let value = upper - pr.rho * gap + pr.sigma * T::half() * linalg::norm_sq(z)
        - pr.sigma * linalg::dot(y, z);
    finite_scalar(value, "psi", &[x, y, z])
}

/// `d_y = ∇ᵧF(x,y) − ρ∇ᵧf(x,y) − σz`, the ascent direction `∇ᵧψ`.
pub fn direction_y<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<Vec<T>> {
    check_point(problem, x, y, z)?;
    let mut d = problem.upper_grad_y(x, y);
    let gf = problem.lower_grad_y(x, y);
    linalg::axpy(-pr.rho, &gf, &mut d);
    linalg::axpy(-pr.sigma, z, &mut d);
    finite_vec(d, "direction_y", &[x, y, z])
}

/// `d_z = ρ∇ᵧf(x,z) + σ(z − y)`, the descent direction `∇_zψ`.
pub fn direction_z<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<Vec<T>> {
    check_point(problem, x, y, z)?;
    let gf = problem.lower_grad_y(x, z);
    let d = gf
        .iter()
        .zip(y.iter().zip(z))
        .map(|(&g, (&yi, &zi))| pr.rho * g + pr.sigma * (zi - yi))
        .collect();
    finite_vec(d, "direction_z", &[x, y, z])
}

/// `d_x = ∇ₓF(x,y) − ρ(∇ₓf(x,y) − ∇ₓf(x,z))`.
///
/// Evaluated at the exact saddle this is `∇φ_{ρ,σ}(x)`; the single-loop solver
/// evaluates it at the freshly updated `(y, z)` instead.
pub fn direction_x<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<Vec<T>> {
    check_point(problem, x, y, z)?;
    let mut d = problem.upper_grad_x(x, y);
    let gy = problem.lower_grad_x(x, y);
    let gz = problem.lower_grad_x(x, z);
    for ((di, &a), &b) in d.iter_mut().zip(&gy).zip(&gz) {
        *di = *di - pr.rho * (a - b);
    }
    finite_vec(d, "direction_x", &[x, y, z])
}

/// The monotone saddle operator `T(x, u) = (−∇ᵧψ, ∇_zψ)` stacked as `[y-part; z-part]`.
pub fn operator_t<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    y: &[T],
    z: &[T],
) -> Result<Vec<T>> {
    let dy = direction_y(problem, pr, x, y, z)?;
    let dz = direction_z(problem, pr, x, y, z)?;
    let mut out: Vec<T> = dy.into_iter().map(|v| -v).collect();
    out.extend(dz);
    Ok(out)
}

/// Lipschitz constant of `T(x, ·)`: `max{L_F + ρL_f + σ, ρL_f + 2σ}`.
pub fn operator_lipschitz<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
) -> T {
    let a = problem.lip_upper() + pr.rho * problem.lip_lower() + pr.sigma;
    let b = pr.rho * problem.lip_lower() + T::two() * pr.sigma;
    a.max(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::QuadraticTestbed;

    fn pr(rho: f64, sigma: f64) -> PenaltyReg<f64> {
        PenaltyReg::new(rho, sigma).unwrap()
    }

    #[test]
    fn psi_hand_values() {
        let q = QuadraticTestbed::<f64>::new();
        assert_eq!(eval_psi(&q, pr(2.0, 1.0), &[1.0], &[2.0], &[0.0]).unwrap(), -1.0);
        assert_eq!(eval_psi(&q, pr(3.0, 0.5), &[0.0], &[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn psi_on_diagonal_collapses_to_regularized_upper() {
        let q = QuadraticTestbed::<f64>::new();
        let (x, y) = ([0.3], [1.7]);
        let psi = eval_psi(&q, pr(7.0, 0.1), &x, &y, &y).unwrap();
        let expected = q.upper(&x, &y) - 0.05 * y[0] * y[0];
        assert!((psi - expected).abs() < 1e-14);
    }

    #[test]
    fn direction_hand_values() {
        let q = QuadraticTestbed::<f64>::new();
        let p = pr(1.0, 1.0);
        assert_eq!(direction_y(&q, p, &[1.0], &[0.0], &[0.0]).unwrap(), vec![4.0]);
        assert_eq!(direction_z(&q, p, &[1.0], &[0.0], &[0.0]).unwrap(), vec![-2.0]);
        let dx = direction_x(&q, p, &[1.0], &[0.4], &[0.2]).unwrap();
        assert!((dx[0] + 0.8).abs() < 1e-15);
        assert_eq!(operator_t(&q, p, &[1.0], &[0.0], &[0.0]).unwrap(), vec![-4.0, -2.0]);
    }

    #[test]
    fn stationary_point_gives_zero_directions() {
        let q = QuadraticTestbed::<f64>::new();
        // y = x makes both partial gradients vanish
        let d = direction_y(&q, pr(5.0, 0.3), &[2.0], &[2.0], &[0.0]).unwrap();
        assert_eq!(d, vec![0.0]);
        // z = y at a lower-level minimizer leaves only ρ∇f(x,z) = 0
        let d = direction_z(&q, pr(5.0, 0.3), &[2.0], &[2.0], &[2.0]).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn equal_y_and_z_cancel_penalty_in_x_direction() {
        let q = QuadraticTestbed::<f64>::new();
        let dx = direction_x(&q, pr(9.0, 0.1), &[0.5], &[1.5], &[1.5]).unwrap();
        assert_eq!(dx, q.upper_grad_x(&[0.5], &[1.5]));
    }

    #[test]
    fn rejects_bad_parameters_and_dimensions() {
        assert!(PenaltyReg::new(0.0, 1.0).is_err());
        assert!(PenaltyReg::new(1.0, -1.0).is_err());
        let q = QuadraticTestbed::<f64>::new();
        assert!(matches!(
            eval_psi(&q, pr(1.0, 1.0), &[1.0, 2.0], &[0.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
