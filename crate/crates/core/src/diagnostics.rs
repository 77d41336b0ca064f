//! Convergence measurements along a run: relative error to a known optimum,
//! oracle-based tracking error and stationarity residual, the merit function,
//! and checks of the `φ_{ρ,σ} → φ` asymptotics on instances with a closed form.

use crate::benchmarks::ClosedForm;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::{central_difference, BilevelProblem};
use crate::saddle::{effective_modulus, eval_phi, phi_at_saddle, solve_saddle, solve_saddle_from, SaddleOptions, SaddlePoint};
use crate::scalar::Scalar;
use crate::schedule::ScheduleParams;
use crate::smooth::PenaltyReg;
use crate::solver::IterateState;

/// `(‖x−x*‖² + ‖y−y*‖²) / (‖x⁰−x*‖² + ‖y⁰−y*‖²)`
pub fn relative_error<T: Scalar>(x: &[T], y: &[T], x_star: &[T], y_star: &[T], x0: &[T], y0: &[T]) -> Result<T> {
    check_dim("x*", x.len(), x_star.len())?;
    check_dim("x0", x.len(), x0.len())?;
    check_dim("y*", y.len(), y_star.len())?;
    check_dim("y0", y.len(), y0.len())?;
    let den = linalg::dist_sq(x0, x_star) + linalg::dist_sq(y0, y_star);
    if den == T::zero() {
        return Err(Error::Contract("relative error undefined: initial point is the optimum".into()));
    }
    Ok((linalg::dist_sq(x, x_star) + linalg::dist_sq(y, y_star)) / den)
}

/// `‖(y, z) − (y*, z*)‖` against the oracle saddle at `x`.
pub fn tracking_error<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    state: &IterateState<T>,
    opts: &SaddleOptions<T>,
) -> Result<T> {
    let saddle = solve_saddle(problem, pr, &state.x, opts)?;
    Ok(crate::saddle::distance_to(&saddle, &state.y, &state.z))
}

fn projected_gradient_residual<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    x: &[T],
    g: &[T],
    alpha: T,
) -> T {
    problem.set_x().natural_residual(x, g, alpha)
}

/// `‖x − Proj_X(x − α·∇φ_{ρ,σ}(x))‖ / α` with the oracle gradient.
pub fn stationarity_residual<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    pr: PenaltyReg<T>,
    x: &[T],
    alpha: T,
    opts: &SaddleOptions<T>,
) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::Contract(format!("alpha must be positive, got {alpha}")));
    }
    let g = crate::saddle::grad_phi(problem, pr, x, opts)?;
    Ok(projected_gradient_residual(problem, x, &g, alpha))
}

/// Oracle measurements at one state, sharing a single saddle solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDiagnostics<T> {
    pub phi: T,
    pub tracking_err: T,
    pub stat_residual: T,
    pub saddle: SaddlePoint<T>,
}

/// Evaluates `φ_k(x^k)`, the tracking error and the stationarity residual at
/// the parameters of iteration `state.k`. The oracle is warm-started from `warm`
/// when given, otherwise from the state's own `(y, z)`.
pub fn oracle_diagnostics<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    state: &IterateState<T>,
    sp: &ScheduleParams<T>,
    opts: &SaddleOptions<T>,
    warm: Option<&[T]>,
) -> Result<OracleDiagnostics<T>> {
    let step = sp.params_at(state.k)?;
    let pr = step.penalty()?;
    let own: Vec<T>;
    let u0 = match warm {
        Some(u) => u,
        None => {
            own = state.y.iter().chain(&state.z).copied().collect();
            &own
        }
    };
    let saddle = solve_saddle_from(problem, pr, &state.x, u0, opts)?;
    let tracking_err = crate::saddle::distance_to(&saddle, &state.y, &state.z);
    let eval = phi_at_saddle(problem, pr, &state.x, saddle)?;
    let stat_residual = projected_gradient_residual(problem, &state.x, &eval.gradient, step.alpha);
    Ok(OracleDiagnostics {
        phi: eval.value,
        tracking_err,
        stat_residual,
        saddle: eval.saddle,
    })
}

/// Coefficients of `V_k = k^{−s}(φ_k(x^k) − φ̲) + k^{−t}‖u^k − u*_k‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritCoefficients<T> {
    pub t_exp: T,
    pub phi_lower: T,
}

impl<T: Scalar> MeritCoefficients<T> {
    /// `t = 4p + 5q` and `φ̲ = min_observed − 1`.
    pub fn from_observed(sp: &ScheduleParams<T>, min_phi: T) -> Self {
        Self {
            t_exp: T::lit(4.0) * sp.p + T::lit(5.0) * sp.q,
            phi_lower: min_phi - T::one(),
        }
    }
}

pub fn merit_value<T: Scalar>(
    mc: &MeritCoefficients<T>,
    sp: &ScheduleParams<T>,
    k: usize,
    phi_k: T,
    tracking_err: T,
) -> Result<T> {
    if k == 0 {
        return Err(Error::Contract("merit function is defined for k >= 1".into()));
    }
    let kf = T::from_usize(k).unwrap();
    let v = kf.powf(-sp.s) * (phi_k - mc.phi_lower) + kf.powf(-mc.t_exp) * tracking_err * tracking_err;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: "merit",
            point: vec![phi_k.as_f64(), tracking_err.as_f64()],
        })
    }
}

/// `(L_F + 2ρL_f)(L_F + 2ρL_f + σ̄)/σ̄`, a Lipschitz constant of `∇φ_{ρ,σ}`.
pub fn lipschitz_phi_bound<T: Scalar, P: BilevelProblem<T> + ?Sized>(problem: &P, pr: PenaltyReg<T>) -> T {
    let sb = effective_modulus(problem, pr);
    let l = problem.lip_upper() + T::two() * pr.rho * problem.lip_lower();
    l * (l + sb) / sb
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichRow<T> {
    pub rho: T,
    pub sigma: T,
    pub phi_smooth: T,
    pub phi: T,
    /// `φ_{ρ,σ}(x) − φ(x)`
    pub gap: T,
    /// `φ(x) − (σ/2)‖y*(x)‖²`
    pub lower_bound: T,
    pub lower_bound_holds: bool,
    /// `‖(y*_{ρ,σ}, z*_{ρ,σ}) − (y*(x), y*(x))‖`
    pub saddle_deviation: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport<T> {
    pub rows: Vec<SandwichRow<T>>,
}

impl<T: Scalar> SandwichReport<T> {
    pub fn lower_bounds_hold(&self) -> bool {
        self.rows.iter().all(|r| r.lower_bound_holds)
    }

    /// Whether `|gap|` is non-increasing along the rows, up to `slack`.
    pub fn gaps_monotone(&self, slack: T) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].gap.abs() <= w[0].gap.abs() + slack)
    }

    /// Whether the positive part of the gap is non-increasing along the rows.
    pub fn positive_gaps_monotone(&self, slack: T) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].gap.max(T::zero()) <= w[0].gap.max(T::zero()) + slack)
    }
}

/// Compares `φ_{ρ,σ}(x)` from the oracle with the closed-form `φ(x)` for each
/// `(ρ, σ)` in `pairs`, in the given order. `slack` absorbs oracle error in
/// the lower-bound check.
pub fn sandwich_check<T, P>(
    problem: &P,
    x: &[T],
    pairs: &[(T, T)],
    opts: &SaddleOptions<T>,
    slack: T,
) -> Result<SandwichReport<T>>
where
    T: Scalar,
    P: BilevelProblem<T> + ClosedForm<T> + ?Sized,
{
    check_dim("x", problem.dim_x(), x.len())?;
    let phi = problem.value_function(x);
    let y_bar = problem.worst_case_response(x);
    let mut rows = Vec::with_capacity(pairs.len());
    let mut warm: Option<Vec<T>> = None;
    for &(rho, sigma) in pairs {
        let pr = PenaltyReg::new(rho, sigma)?;
        let saddle = match &warm {
            Some(u) => solve_saddle_from(problem, pr, x, u, opts)?,
            None => solve_saddle(problem, pr, x, opts)?,
        };
        warm = Some(saddle.stacked());
        let saddle_deviation =
            (linalg::dist_sq(&saddle.y_star, &y_bar) + linalg::dist_sq(&saddle.z_star, &y_bar)).sqrt();
        let phi_smooth = phi_at_saddle(problem, pr, x, saddle)?.value;
        let lower_bound = phi - sigma * T::half() * linalg::norm_sq(&y_bar);
        rows.push(SandwichRow {
            rho,
            sigma,
            phi_smooth,
            phi,
            gap: phi_smooth - phi,
            lower_bound,
            lower_bound_holds: phi_smooth >= lower_bound - slack,
            saddle_deviation,
        });
    }
    Ok(SandwichReport { rows })
}

/// Largest relative deviation of the oracle gradient `∇φ_{ρ,σ}` from central
/// differences of the oracle value `φ_{ρ,σ}` over `trials` random interior `x`.
pub fn check_phi_gradient<T, P, R>(
    problem: &P,
    pr: PenaltyReg<T>,
    trials: usize,
    step: T,
    opts: &SaddleOptions<T>,
    rng: &mut R,
) -> Result<f64>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
    R: rand::Rng + ?Sized,
{
    if trials == 0 || !(step > T::zero()) {
        return Err(Error::Contract("gradient check needs trials >= 1 and a positive step".into()));
    }
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = problem.set_x().sample_interior(rng, T::lit(5.0));
        let g = crate::saddle::grad_phi(problem, pr, &x, opts)?;
        let mut failure = None;
        let fd = central_difference(&x, step, |xp| match eval_phi(problem, pr, xp, opts) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                T::nan()
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        worst = worst.max(linalg::relative_deviation(&g, &fd).as_f64());
    }
    Ok(worst)
}

/// One row of per-iteration measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord<T> {
    pub k: usize,
    pub phi_k: T,
    pub eps_rel: Option<T>,
    pub tracking_err: T,
    pub stat_residual: T,
    pub merit: T,
    pub elapsed_s: f64,
}

/// Prefix minima of `values`.
pub fn running_min<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut best = T::infinity();
    values
        .iter()
        .map(|&v| {
            best = best.min(v);
            best
        })
        .collect()
}

/// Least-squares slope of `log(value)` against `log(k)` over positive entries.
/// Returns `None` with fewer than two usable points.
pub fn loglog_slope(ks: &[usize], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(values)
        .filter(|(&k, &v)| k > 0 && v > 0.0 && v.is_finite())
        .map(|(&k, &v)| ((k as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
