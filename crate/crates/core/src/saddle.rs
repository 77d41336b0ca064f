//! Near-exact saddle point `(y*, z*)` of `ψ_{ρ,σ}(x, ·, ·)` over `Y × Y`, and
//! the reference value `φ_{ρ,σ}(x)` and gradient `∇φ_{ρ,σ}(x)` derived from it.
//!
//! Accuracy is always reported as the projected fixed-point residual
//! `‖u − Proj(u − β·T(u))‖ / β` with the reference step
//! `β = σ̄ / (2(L_F + ρL_f + 2σ)²)`, whatever method produced `u`.
//!
//! Two methods are available. [`SaddleMethod::ProjectedGradient`] iterates the
//! fixed-point map with the reference step; it contracts at rate `1 − σ̄β`,
//! which is far too slow once `ρ` is large and `σ` small. The default
//! [`SaddleMethod::Newton`] applies a semismooth Newton method to the natural
//! map `u − Proj(u − γT(u))` with a finite-difference Jacobian of `T` and a
//! backtracking search that keeps the reported residual non-increasing.

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::problem::{BilevelProblem, ProjectableSet};
use crate::scalar::Scalar;
use crate::smooth::{direction_x, eval_psi, operator_t, PenaltyReg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaddleMethod {
    #[default]
    Newton,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub method: SaddleMethod,
    /// Keep the residual after every iteration in [`SaddlePoint::history`].
    pub record_history: bool,
}

/// Oracle tolerance for ground-truth uses such as gradient checks.
pub const GROUND_TRUTH_TOL: f64 = 1e-10;
/// Oracle tolerance for diagnostics along a run.
pub const DIAGNOSTICS_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

impl<T: Scalar> SaddleOptions<T> {
    pub fn new(tol: T) -> Self {
        Self {
            tol,
            max_iter: DEFAULT_MAX_ITER,
            method: SaddleMethod::default(),
            record_history: false,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_method(mut self, method: SaddleMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::Contract(format!("oracle tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Contract("oracle max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for SaddleOptions<T> {
    fn default() -> Self {
        Self::new(T::lit(GROUND_TRUTH_TOL))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint<T> {
    pub y_star: Vec<T>,
    pub z_star: Vec<T>,
    pub residual: T,
    pub iterations_used: usize,
    /// Residual after each iteration, starting with the initial point.
    /// Empty unless requested.
    pub history: Vec<T>,
}

impl<T: Scalar> SaddlePoint<T> {
    /// `(y*, z*)` stacked.
    pub fn stacked(&self) -> Vec<T> {
        let mut u = self.y_star.clone();
        u.extend_from_slice(&self.z_star);
        u
    }
}

/// `σ̄ = min{σ, μ}`; falls back to `σ` for instances without a concavity modulus.
pub fn effective_modulus<T: Scalar, P: BilevelProblem<T> + ?Sized>(problem: &P, pr: PenaltyReg<T>) -> T {
    let mu = problem.mu();
    if mu > T::zero() {
        pr.sigma.min(mu)
    } else {
        pr.sigma
    }
}

/// Largest step for which one projected step is a contraction:
/// `σ̄ / (L_F + ρL_f + 2σ)²`.
pub fn contraction_bound<T: Scalar, P: BilevelProblem<T> + ?Sized>(problem: &P, pr: PenaltyReg<T>) -> T {
    let l = problem.lip_upper() + pr.rho * problem.lip_lower() + T::two() * pr.sigma;
    effective_modulus(problem, pr) / (l * l)
}

/// Half the contraction bound. Errors when it underflows.
pub fn reference_step<T: Scalar, P: BilevelProblem<T> + ?Sized>(problem: &P, pr: PenaltyReg<T>) -> Result<T> {
    let beta = contraction_bound(problem, pr) * T::half();
    if beta.is_normal() {
        Ok(beta)
    } else {
        Err(Error::StepUnderflow {
            rho: pr.rho.as_f64(),
            sigma: pr.sigma.as_f64(),
        })
    }
}

fn split<T>(u: &[T]) -> (&[T], &[T]) {
    u.split_at(u.len() / 2)
}

fn project_pair<T: Scalar>(set: &ProjectableSet<T>, u: &mut [T]) {
    let (y, z) = u.split_at_mut(u.len() / 2);
    set.project_in_place(y);
    set.project_in_place(z);
}

fn operator_at<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u: &[T],
) -> Result<Vec<T>> {
    let (y, z) = split(u);
    operator_t(problem, pr, x, y, z)
}

/// One projected step `Proj_{Y×Y}(u − β·T(x,u))`.
pub fn projected_step<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u: &[T],
    beta: T,
) -> Result<Vec<T>> {
    crate::error::check_dim("saddle pair", 2 * problem.dim_y(), u.len())?;
    let t = operator_at(problem, pr, x, u)?;
    let mut next: Vec<T> = u.iter().zip(&t).map(|(&ui, &ti)| ui - beta * ti).collect();
    project_pair(problem.set_y(), &mut next);
    Ok(next)
}

fn residual_from<T: Scalar>(set: &ProjectableSet<T>, u: &[T], t: &[T], beta: T) -> T {
    let (uy, uz) = split(u);
    let (ty, tz) = split(t);
    let ry = set.natural_residual(uy, ty, beta);
    let rz = set.natural_residual(uz, tz, beta);
    (ry * ry + rz * rz).sqrt()
}

/// `‖u − Proj_{Y×Y}(u − β·T(x,u))‖ / β` for a feasible `u`.
pub fn fixed_point_residual<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u: &[T],
    beta: T,
) -> Result<T> {
    crate::error::check_dim("saddle pair", 2 * problem.dim_y(), u.len())?;
    let t = operator_at(problem, pr, x, u)?;
    Ok(residual_from(problem.set_y(), u, &t, beta))
}

/// Solves from the projection of the zero vector. Fails when the residual
/// does not reach `opts.tol` within `opts.max_iter` iterations.
pub fn solve_saddle<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    opts: &SaddleOptions<T>,
) -> Result<SaddlePoint<T>> {
    let u0 = vec![T::zero(); 2 * problem.dim_y()];
    solve_saddle_from(problem, pr, x, &u0, opts)
}

/// Warm-started variant of [`solve_saddle`]; `u0 = (y₀, z₀)` is projected first.
pub fn solve_saddle_from<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u0: &[T],
    opts: &SaddleOptions<T>,
) -> Result<SaddlePoint<T>> {
    let sp = iterate_saddle(problem, pr, x, u0, opts)?;
    if sp.residual <= opts.tol {
        Ok(sp)
    } else {
        Err(Error::SaddleNotConverged {
            residual: sp.residual.as_f64(),
            iterations: sp.iterations_used,
        })
    }
}

/// Runs the oracle and returns the last iterate whether or not it reached
/// `opts.tol`; the caller inspects `residual`.
pub fn iterate_saddle<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u0: &[T],
    opts: &SaddleOptions<T>,
) -> Result<SaddlePoint<T>> {
    opts.validate()?;
    crate::error::check_dim("x", problem.dim_x(), x.len())?;
    crate::error::check_dim("saddle start", 2 * problem.dim_y(), u0.len())?;
    let beta = reference_step(problem, pr)?;
    let mut u = u0.to_vec();
    project_pair(problem.set_y(), &mut u);
    let (u, residual, iterations_used, history) = match opts.method {
        SaddleMethod::ProjectedGradient => pgda(problem, pr, x, u, beta, opts)?,
        SaddleMethod::Newton => newton(problem, pr, x, u, beta, opts)?,
    };
    let m = problem.dim_y();
    Ok(SaddlePoint {
        y_star: u[..m].to_vec(),
        z_star: u[m..].to_vec(),
        residual,
        iterations_used,
        history,
    })
}

type Iterated<T> = (Vec<T>, T, usize, Vec<T>);

fn pgda<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    mut u: Vec<T>,
    beta: T,
    opts: &SaddleOptions<T>,
) -> Result<Iterated<T>> {
    let set = problem.set_y();
    let mut t = operator_at(problem, pr, x, &u)?;
    let mut res = residual_from(set, &u, &t, beta);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(res);
    }
    let mut iters = 0;
    while res > opts.tol && iters < opts.max_iter {
        for (ui, &ti) in u.iter_mut().zip(&t) {
            *ui = *ui - beta * ti;
        }
        project_pair(set, &mut u);
        t = operator_at(problem, pr, x, &u)?;
        res = residual_from(set, &u, &t, beta);
        iters += 1;
        if opts.record_history {
            history.push(res);
        }
    }
    Ok((u, res, iters, history))
}

/// Central-difference Jacobian of `v ↦ g(v)` for a map `ℝᵐ → ℝᵐ`.
fn gradient_jacobian<T: Scalar>(v: &[T], g: impl Fn(&[T]) -> Vec<T>) -> Result<SquareMatrix<T>> {
    let m = v.len();
    let mut jac = SquareMatrix::zeros(m);
    let mut probe = v.to_vec();
    let scale = T::epsilon().cbrt();
    for j in 0..m {
        let h = scale * v[j].abs().max(T::one());
        probe[j] = v[j] + h;
        let gp = g(&probe);
        probe[j] = v[j] - h;
        let gm = g(&probe);
        probe[j] = v[j];
        let col: Vec<T> = gp.iter().zip(&gm).map(|(&a, &b)| (a - b) / (T::two() * h)).collect();
        if !linalg::all_finite(&col) {
            return Err(Error::NonFinite {
                what: "saddle Jacobian",
                point: linalg::to_f64_vec(v),
            });
        }
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Jacobian of `u ↦ T(x,u)`,
///
/// ```text
/// [ −∇²ᵧᵧF(x,y) + ρ∇²ᵧᵧf(x,y)    σI                  ]
/// [ −σI                           ρ∇²ᵧᵧf(x,z) + σI    ]
/// ```
///
/// with the Hessian blocks differenced from the problem gradients. The `σ`
/// terms are inserted exactly: they are many orders of magnitude below the
/// penalty terms and would be lost to rounding if `T` were differenced as a whole.
fn operator_jacobian<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    u: &[T],
) -> Result<SquareMatrix<T>> {
    let (y, z) = split(u);
    let m = y.len();
    let hf_upper = gradient_jacobian(y, |v| problem.upper_grad_y(x, v))?;
    let hf_y = gradient_jacobian(y, |v| problem.lower_grad_y(x, v))?;
    let hf_z = gradient_jacobian(z, |v| problem.lower_grad_y(x, v))?;
    let mut jac = SquareMatrix::zeros(2 * m);
    for i in 0..m {
        for j in 0..m {
            jac[(i, j)] = pr.rho * hf_y[(i, j)] - hf_upper[(i, j)];
            jac[(m + i, m + j)] = pr.rho * hf_z[(i, j)];
        }
        jac[(i, m + i)] = pr.sigma;
        jac[(m + i, i)] = -pr.sigma;
        jac[(m + i, m + i)] = jac[(m + i, m + i)] + pr.sigma;
    }
    Ok(jac)
}

const ARMIJO: f64 = 1e-4;
const MIN_DAMPING: f64 = 1e-10;

fn newton<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    mut u: Vec<T>,
    beta: T,
    opts: &SaddleOptions<T>,
) -> Result<Iterated<T>> {
    let set = problem.set_y();
    let n = u.len();
    let m = n / 2;
    let mut t = operator_at(problem, pr, x, &u)?;
    let mut res = residual_from(set, &u, &t, beta);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(res);
    }
    let mut iters = 0;
    while res > opts.tol && iters < opts.max_iter {
        let jac = operator_jacobian(problem, pr, x, &u)?;
        let gamma = T::one() / jac.norm_inf().max(T::min_positive_value().sqrt());

        // natural map R(u) = u − Proj(u − γT(u)) and its generalized Jacobian
        // M = I − D + γ·D·J with D ∈ ∂Proj(u − γT(u))
        let v: Vec<T> = u.iter().zip(&t).map(|(&ui, &ti)| ui - gamma * ti).collect();
        let mut pv = v.clone();
        project_pair(set, &mut pv);
        let rhs: Vec<T> = u.iter().zip(&pv).map(|(&ui, &pi)| pi - ui).collect();
        let dy = set.projection_jacobian(&v[..m]);
        let dz = set.projection_jacobian(&v[m..]);
        let mut d = SquareMatrix::zeros(n);
        for i in 0..m {
            for j in 0..m {
                d[(i, j)] = dy[(i, j)];
                d[(m + i, m + j)] = dz[(i, j)];
            }
        }
        let dj = d.matmul(&jac);
        let mut mat = SquareMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = mat[(i, j)] - d[(i, j)] + gamma * dj[(i, j)];
            }
        }
        let Some(step) = mat.solve(&rhs) else {
            log::debug!("saddle Newton system singular after {iters} iterations");
            break;
        };

        let mut damping = T::one();
        let mut accepted = None;
        while damping >= T::lit(MIN_DAMPING) {
            let mut cand: Vec<T> = u.iter().zip(&step).map(|(&ui, &si)| ui + damping * si).collect();
            project_pair(set, &mut cand);
            if let Ok(tc) = operator_at(problem, pr, x, &cand) {
                let rc = residual_from(set, &cand, &tc, beta);
                if rc <= (T::one() - T::lit(ARMIJO) * damping) * res {
                    accepted = Some((cand, tc, rc));
                    break;
                }
            }
            damping = damping * T::half();
        }
        let Some((cand, tc, rc)) = accepted else {
            log::debug!("saddle Newton line search stalled at residual {res}");
            break;
        };
        u = cand;
        t = tc;
        res = rc;
        iters += 1;
        if opts.record_history {
            history.push(res);
        }
    }
    Ok((u, res, iters, history))
}

/// `φ_{ρ,σ}(x)` together with `∇φ_{ρ,σ}(x)` and the saddle they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEval<T> {
    pub value: T,
    pub gradient: Vec<T>,
    pub saddle: SaddlePoint<T>,
}

pub fn phi_and_grad<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    opts: &SaddleOptions<T>,
) -> Result<PhiEval<T>> {
    let saddle = solve_saddle(problem, pr, x, opts)?;
    phi_at_saddle(problem, pr, x, saddle)
}

/// Evaluates `ψ` and the gradient formula at an already computed saddle.
pub fn phi_at_saddle<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    saddle: SaddlePoint<T>,
) -> Result<PhiEval<T>> {
    let value = eval_psi(problem, pr, x, &saddle.y_star, &saddle.z_star)?;
    let gradient = direction_x(problem, pr, x, &saddle.y_star, &saddle.z_star)?;
    Ok(PhiEval {
        value,
        gradient,
        saddle,
    })
}

/// `φ_{ρ,σ}(x) = ψ(x, y*, z*)`.
pub fn eval_phi<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    opts: &SaddleOptions<T>,
) -> Result<T> {
    let saddle = solve_saddle(problem, pr, x, opts)?;
    eval_psi(problem, pr, x, &saddle.y_star, &saddle.z_star)
}

/// `∇φ_{ρ,σ}(x) = ∇ₓF(x,y*) − ρ∇ₓf(x,y*) + ρ∇ₓf(x,z*)`.
pub fn grad_phi<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    opts: &SaddleOptions<T>,
) -> Result<Vec<T>> {
    let saddle = solve_saddle(problem, pr, x, opts)?;
    direction_x(problem, pr, x, &saddle.y_star, &saddle.z_star)
}

/// Distance from `(y, z)` to a saddle, `‖(y,z) − (y*,z*)‖`.
pub fn distance_to<T: Scalar>(saddle: &SaddlePoint<T>, y: &[T], z: &[T]) -> T {
    (linalg::dist_sq(y, &saddle.y_star) + linalg::dist_sq(z, &saddle.z_star)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::QuadraticTestbed;

    fn pr(rho: f64, sigma: f64) -> PenaltyReg<f64> {
        PenaltyReg::new(rho, sigma).unwrap()
    }

    #[test]
    fn quadratic_saddle_matches_linear_solve() {
        let q = QuadraticTestbed::<f64>::new();
        for method in [SaddleMethod::Newton, SaddleMethod::ProjectedGradient] {
            let opts = SaddleOptions::new(1e-10).with_method(method);
            let sp = solve_saddle(&q, pr(1.0, 1.0), &[1.0], &opts).unwrap();
            assert!((sp.y_star[0] - 10.0 / 13.0).abs() < 1e-9, "{method:?}");
            assert!((sp.z_star[0] - 12.0 / 13.0).abs() < 1e-9, "{method:?}");
            assert!(sp.residual <= 1e-10);
        }
    }

    #[test]
    fn origin_is_immediate_fixed_point() {
        let q = QuadraticTestbed::<f64>::new();
        let sp = solve_saddle(&q, pr(3.0, 0.5), &[0.0], &SaddleOptions::default()).unwrap();
        assert_eq!((sp.y_star[0], sp.z_star[0], sp.iterations_used), (0.0, 0.0, 0));
    }

    #[test]
    fn phi_and_gradient_hand_values() {
        let q = QuadraticTestbed::<f64>::new();
        let opts = SaddleOptions::default();
        let phi = eval_phi(&q, pr(1.0, 1.0), &[1.0], &opts).unwrap();
        assert!((phi + 5.0 / 13.0).abs() < 1e-9);
        let g = grad_phi(&q, pr(1.0, 1.0), &[1.0], &opts).unwrap();
        assert!((g[0] + 10.0 / 13.0).abs() < 1e-9);
    }

    #[test]
    fn reference_step_value() {
        // σ̄ = 1, L = 2 + 2 + 2 = 6
        let q = QuadraticTestbed::<f64>::new();
        assert!((reference_step(&q, pr(1.0, 1.0)).unwrap() - 1.0 / 72.0).abs() < 1e-16);
    }

    #[test]
    fn underflowing_step_is_reported() {
        let q = QuadraticTestbed::<f32>::new();
        let p = PenaltyReg::new(1e30f32, 1e-30).unwrap();
        assert!(matches!(reference_step(&q, p), Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn exhausted_budget_is_an_error() {
        let q = QuadraticTestbed::<f64>::new();
        let opts = SaddleOptions::new(1e-12)
            .with_method(SaddleMethod::ProjectedGradient)
            .with_max_iter(3);
        assert!(matches!(
            solve_saddle(&q, pr(1.0, 1.0), &[1.0], &opts),
            Err(Error::SaddleNotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn rejects_bad_options() {
        let q = QuadraticTestbed::<f64>::new();
        assert!(solve_saddle(&q, pr(1.0, 1.0), &[1.0], &SaddleOptions::new(0.0)).is_err());
        let opts = SaddleOptions::new(1e-8).with_max_iter(0);
        assert!(solve_saddle(&q, pr(1.0, 1.0), &[1.0], &opts).is_err());
    }
}
