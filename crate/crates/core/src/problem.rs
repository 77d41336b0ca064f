//! Problem contract for pessimistic bilevel instances and the feasible sets
//! they live on.
//!
//! Callers are responsible for the lower-level solution set being nonempty
//! and locally bounded; this is not something the toolkit can verify for an
//! arbitrary user problem.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::scalar::Scalar;

/// A closed convex set with an exact Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectableSet<T> {
    FullSpace { dim: usize },
    /// Axis-aligned box; entries may be infinite.
    Box { lower: Vec<T>, upper: Vec<T> },
    Ball { center: Vec<T>, radius: T },
}

impl<T: Scalar> ProjectableSet<T> {
    pub fn full_space(dim: usize) -> Self {
        Self::FullSpace { dim }
    }

    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_dim("box upper bound", lower.len(), upper.len())?;
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Contract(format!(
                    "box bounds out of order at index {i}: {lo} > {hi}"
                )));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    /// `[lo, hi]^dim`; either bound may be infinite.
    pub fn uniform_box(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::Contract(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::FullSpace { dim } => *dim,
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    /// Euclidean projection of `v` onto the set.
    pub fn project(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim("projection input", self.dim(), v.len())?;
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// In-place projection. The length of `v` must match [`Self::dim`].
    pub fn project_in_place(&self, v: &mut [T]) {
        debug_assert_eq!(v.len(), self.dim());
        match self {
            Self::FullSpace { .. } => {}
            Self::Box { lower, upper } => {
                for ((vi, &lo), &hi) in v.iter_mut().zip(lower).zip(upper) {
                    *vi = vi.max(lo).min(hi);
                }
            }
            Self::Ball { center, radius } => {
                let d = linalg::dist(v, center);
                if d > *radius {
                    let scale = *radius / d;
                    for (vi, &ci) in v.iter_mut().zip(center) {
                        *vi = ci + (*vi - ci) * scale;
                    }
                }
            }
        }
    }

    pub fn contains(&self, v: &[T], tol: T) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            Self::FullSpace { .. } => true,
            Self::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&vi, (&lo, &hi))| vi >= lo - tol && vi <= hi + tol),
            Self::Ball { center, radius } => linalg::dist(v, center) <= *radius + tol,
        }
    }

    /// `‖u − Proj(u − step·g)‖ / step` for a feasible `u`.
    ///
    /// Box components are evaluated without forming `u − step·g` where the
    /// bound is inactive, so the value stays accurate for tiny steps.
    pub fn natural_residual(&self, u: &[T], g: &[T], step: T) -> T {
        match self {
            Self::FullSpace { .. } => linalg::norm(g),
            Self::Box { lower, upper } => {
                let mut acc = T::zero();
                for i in 0..u.len() {
                    let v = u[i] - step * g[i];
                    let r = if v < lower[i] {
                        (u[i] - lower[i]) / step
                    } else if v > upper[i] {
                        (u[i] - upper[i]) / step
                    } else {
                        g[i]
                    };
                    acc = acc + r * r;
                }
                acc.sqrt()
            }
            Self::Ball { .. } => {
                let mut v: Vec<T> = u.iter().zip(g).map(|(&ui, &gi)| ui - step * gi).collect();
                self.project_in_place(&mut v);
                linalg::dist(u, &v) / step
            }
        }
    }

    /// A generalized Jacobian of the projection evaluated at `v`.
    pub fn projection_jacobian(&self, v: &[T]) -> SquareMatrix<T> {
        let n = self.dim();
        match self {
            Self::FullSpace { .. } => SquareMatrix::identity(n),
            Self::Box { lower, upper } => {
                let mut m = SquareMatrix::zeros(n);
                for i in 0..n {
                    if v[i] > lower[i] && v[i] < upper[i] {
                        m[(i, i)] = T::one();
                    }
                }
                m
            }
            Self::Ball { center, radius } => {
                let w = linalg::sub(v, center);
                let d = linalg::norm(&w);
                if d <= *radius {
                    return SquareMatrix::identity(n);
                }
                let scale = *radius / d;
                let mut m = SquareMatrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        let delta = if i == j { T::one() } else { T::zero() };
                        m[(i, j)] = scale * (delta - w[i] * w[j] / (d * d));
                    }
                }
                m
            }
        }
    }

    /// Draws a point strictly inside the set. Unbounded directions are
    /// sampled over a window of width `spread` starting at the finite bound.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, spread: T) -> Vec<T> {
        let mut unit = |lo: T, hi: T| -> T {
            let u = T::lit(rng.random::<f64>());
            lo + (hi - lo) * u
        };
        match self {
            Self::FullSpace { dim } => (0..*dim).map(|_| unit(-spread, spread)).collect(),
            Self::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| {
                    let (a, b) = match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => (lo, hi),
                        (true, false) => (lo, lo + spread),
                        (false, true) => (hi - spread, hi),
                        (false, false) => (-spread, spread),
                    };
                    let margin = (b - a) * T::lit(0.01);
                    unit(a + margin, b - margin)
                })
                .collect(),
            Self::Ball { center, radius } => {
                let mut dir: Vec<T> = center.iter().map(|_| unit(-T::one(), T::one())).collect();
                let len = linalg::norm(&dir);
                let r = *radius * T::lit(0.99) * unit(T::zero(), T::one());
                if len > T::zero() {
                    for (di, &ci) in dir.iter_mut().zip(center) {
                        *di = ci + *di / len * r;
                    }
                    dir
                } else {
                    center.clone()
                }
            }
        }
    }
}

/// Evaluation contract for a pessimistic bilevel problem
/// `min_{x∈X} max_{y∈S(x)} F(x,y)` with `S(x) = argmin_{y∈Y} f(x,y)`.
///
/// Implementations must be pure: repeated evaluation at the same point returns
/// identical results.
pub trait BilevelProblem<T: Scalar>: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    /// Upper-level objective `F`.
    fn upper(&self, x: &[T], y: &[T]) -> T;
    fn upper_grad_x(&self, x: &[T], y: &[T]) -> Vec<T>;
    fn upper_grad_y(&self, x: &[T], y: &[T]) -> Vec<T>;

    /// Lower-level objective `f`.
    fn lower(&self, x: &[T], y: &[T]) -> T;
    fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T>;
    fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T>;

    fn set_x(&self) -> &ProjectableSet<T>;
    fn set_y(&self) -> &ProjectableSet<T>;

    /// Strong-concavity modulus of `F` in `y`; zero when the instance does not
    /// satisfy that assumption.
    fn mu(&self) -> T;
    /// Lipschitz constant of `∇F`.
    fn lip_upper(&self) -> T;
    /// Lipschitz constant of `∇f`.
    fn lip_lower(&self) -> T;

    /// Describes the standing assumption this instance is known to violate.
    fn assumption_violation(&self) -> Option<&'static str> {
        None
    }
}

macro_rules! forward_problem {
    ($($t:tt)*) => {
        fn dim_x(&self) -> usize { (**self).dim_x() }
        fn dim_y(&self) -> usize { (**self).dim_y() }
        fn upper(&self, x: &[T], y: &[T]) -> T { (**self).upper(x, y) }
        fn upper_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> { (**self).upper_grad_x(x, y) }
        fn upper_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> { (**self).upper_grad_y(x, y) }
        fn lower(&self, x: &[T], y: &[T]) -> T { (**self).lower(x, y) }
        fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> { (**self).lower_grad_x(x, y) }
        fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> { (**self).lower_grad_y(x, y) }
        fn set_x(&self) -> &ProjectableSet<T> { (**self).set_x() }
        fn set_y(&self) -> &ProjectableSet<T> { (**self).set_y() }
        fn mu(&self) -> T { (**self).mu() }
        fn lip_upper(&self) -> T { (**self).lip_upper() }
        fn lip_lower(&self) -> T { (**self).lip_lower() }
        fn assumption_violation(&self) -> Option<&'static str> { (**self).assumption_violation() }
    };
}

impl<T: Scalar, P: BilevelProblem<T> + ?Sized> BilevelProblem<T> for &P {
    forward_problem!();
}

impl<T: Scalar, P: BilevelProblem<T> + ?Sized> BilevelProblem<T> for Box<P> {
    forward_problem!();
}

impl<T: Scalar, P: BilevelProblem<T> + ?Sized> BilevelProblem<T> for std::sync::Arc<P> {
    forward_problem!();
}

/// Wraps a problem and counts objective and partial-gradient evaluations.
#[derive(Debug)]
pub struct Counting<P> {
    inner: P,
    values: AtomicU64,
    gradients: AtomicU64,
}

impl<P> Counting<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            values: AtomicU64::new(0),
            gradients: AtomicU64::new(0),
        }
    }

    /// Number of partial-gradient calls (`∇ₓF`, `∇ᵧF`, `∇ₓf`, `∇ᵧf` each count one).
    pub fn gradient_evals(&self) -> u64 {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn value_evals(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn grad(&self) {
        self.gradients.fetch_add(1, Ordering::Relaxed);
    }

    fn val(&self) {
        self.values.fetch_add(1, Ordering::Relaxed);
    }
}

impl<T: Scalar, P: BilevelProblem<T>> BilevelProblem<T> for Counting<P> {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn upper(&self, x: &[T], y: &[T]) -> T {
        self.val();
        self.inner.upper(x, y)
    }
    fn upper_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.grad();
        self.inner.upper_grad_x(x, y)
    }
    fn upper_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.grad();
        self.inner.upper_grad_y(x, y)
    }
    fn lower(&self, x: &[T], y: &[T]) -> T {
        self.val();
        self.inner.lower(x, y)
    }
    fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.grad();
        self.inner.lower_grad_x(x, y)
    }
    fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.grad();
        self.inner.lower_grad_y(x, y)
    }
    fn set_x(&self) -> &ProjectableSet<T> {
        self.inner.set_x()
    }
    fn set_y(&self) -> &ProjectableSet<T> {
        self.inner.set_y()
    }
    fn mu(&self) -> T {
        self.inner.mu()
    }
    fn lip_upper(&self) -> T {
        self.inner.lip_upper()
    }
    fn lip_lower(&self) -> T {
        self.inner.lip_lower()
    }
    fn assumption_violation(&self) -> Option<&'static str> {
        self.inner.assumption_violation()
    }
}

/// Maximum relative deviation of each supplied gradient from central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub upper_x: f64,
    pub upper_y: f64,
    pub lower_x: f64,
    pub lower_y: f64,
}

impl GradientReport {
    pub fn max(&self) -> f64 {
        self.upper_x.max(self.upper_y).max(self.lower_x).max(self.lower_y)
    }
}

/// Spread used for unbounded coordinates when sampling test points.
const SAMPLE_SPREAD: f64 = 5.0;

/// Central finite-difference gradient of `g` at `v`; step `h·max(1, |vᵢ|)`.
pub fn central_difference<T: Scalar>(
    v: &[T],
    step: T,
    mut g: impl FnMut(&[T]) -> T,
) -> Vec<T> {
    let mut probe = v.to_vec();
    (0..v.len())
        .map(|i| {
            let h = step * v[i].abs().max(T::one());
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = g(&probe);
            probe[i] = orig - h;
            let fm = g(&probe);
            probe[i] = orig;
            (fp - fm) / (T::two() * h)
        })
        .collect()
}

/// Compares all four partial gradients of `problem` against central
/// differences at `trials` random interior points of `X × Y`.
pub fn check_gradients<T, P, R>(
    problem: &P,
    trials: usize,
    step: T,
    rng: &mut R,
) -> Result<GradientReport>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
    R: Rng + ?Sized,
{
    if trials == 0 {
        return Err(Error::Contract("gradient check needs at least one trial".into()));
    }
    if !(step > T::zero()) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let spread = T::lit(SAMPLE_SPREAD);
    let mut report = GradientReport {
        upper_x: 0.0,
        upper_y: 0.0,
        lower_x: 0.0,
        lower_y: 0.0,
    };
    for _ in 0..trials {
        let x = problem.set_x().sample_interior(rng, spread);
        let y = problem.set_y().sample_interior(rng, spread);
        let mut point = linalg::to_f64_vec(&x);
        point.extend(linalg::to_f64_vec(&y));
        for (value, what) in [
            (problem.upper(&x, &y), "upper objective"),
            (problem.lower(&x, &y), "lower objective"),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { what, point });
            }
        }

        let fd = central_difference(&x, step, |xp| problem.upper(xp, &y));
        let e = linalg::relative_deviation(&problem.upper_grad_x(&x, &y), &fd).as_f64();
        report.upper_x = report.upper_x.max(e);

        let fd = central_difference(&y, step, |yp| problem.upper(&x, yp));
        let e = linalg::relative_deviation(&problem.upper_grad_y(&x, &y), &fd).as_f64();
        report.upper_y = report.upper_y.max(e);

        let fd = central_difference(&x, step, |xp| problem.lower(xp, &y));
        let e = linalg::relative_deviation(&problem.lower_grad_x(&x, &y), &fd).as_f64();
        report.lower_x = report.lower_x.max(e);

        let fd = central_difference(&y, step, |yp| problem.lower(&x, yp));
        let e = linalg::relative_deviation(&problem.lower_grad_y(&x, &y), &fd).as_f64();
        report.lower_y = report.lower_y.max(e);
    }
    Ok(report)
}
