//! The single-loop iteration and a double-loop baseline that replaces the
//! inner ascent-descent step with an oracle saddle solve.

use std::time::{Duration, Instant};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::BilevelProblem;
use crate::saddle::{iterate_saddle, SaddleMethod, SaddleOptions};
use crate::scalar::Scalar;
use crate::schedule::ScheduleParams;
use crate::smooth::{direction_x, direction_y, direction_z};

/// `(x^k, y^k, z^k)` with the iteration index `k ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub k: usize,
}

impl<T: Scalar> IterateState<T> {
    /// State at `k = 1`, projected onto `X × Y × Y`.
    pub fn start<P: BilevelProblem<T> + ?Sized>(
        problem: &P,
        mut x: Vec<T>,
        mut y: Vec<T>,
        mut z: Vec<T>,
    ) -> Result<Self> {
        check_dim("x", problem.dim_x(), x.len())?;
        check_dim("y", problem.dim_y(), y.len())?;
        check_dim("z", problem.dim_y(), z.len())?;
        problem.set_x().project_in_place(&mut x);
        problem.set_y().project_in_place(&mut y);
        problem.set_y().project_in_place(&mut z);
        Ok(Self { x, y, z, k: 1 })
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.x) && linalg::all_finite(&self.y) && linalg::all_finite(&self.z)
    }
}

fn diverged(k: usize, what: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Divergence { k, what },
        other => other,
    }
}

/// One iteration: an ascent step on `y` and a descent step on `z` with step
/// `β_k`, then a descent step on `x` with step `α_k` using the updated pair.
pub fn sipba_step<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    state: &IterateState<T>,
    sp: &ScheduleParams<T>,
) -> Result<IterateState<T>> {
    let k = state.k;
    let step = sp.params_at(k)?;
    let pr = step.penalty()?;
    let (x, y, z) = (&state.x, &state.y, &state.z);

    let dy = direction_y(problem, pr, x, y, z).map_err(diverged(k, "direction_y"))?;
    let dz = direction_z(problem, pr, x, y, z).map_err(diverged(k, "direction_z"))?;
    let mut y_next = y.clone();
    linalg::axpy(step.beta, &dy, &mut y_next);
    problem.set_y().project_in_place(&mut y_next);
    let mut z_next = z.clone();
    linalg::axpy(-step.beta, &dz, &mut z_next);
    problem.set_y().project_in_place(&mut z_next);

    let dx = direction_x(problem, pr, x, &y_next, &z_next).map_err(diverged(k, "direction_x"))?;
    let mut x_next = x.clone();
    linalg::axpy(-step.alpha, &dx, &mut x_next);
    problem.set_x().project_in_place(&mut x_next);

    let next = IterateState {
        x: x_next,
        y: y_next,
        z: z_next,
        k: k + 1,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence { k, what: "iterate" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub max_iter: usize,
    /// The observer sees every `stride`-th iterate and the last one.
    pub stride: usize,
}

impl RunOptions {
    pub fn new(max_iter: usize) -> Self {
        Self { max_iter, stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    TargetReached,
    Diverged,
}

/// What the observer learns besides the state itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// Iterations completed so far.
    pub iterations: usize,
    /// Solver wall time, excluding time spent inside the observer.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub state: IterateState<T>,
    pub iterations: usize,
    pub stop: StopReason,
    pub elapsed: Duration,
    /// The error that ended a diverged run; `state` is the last finite iterate.
    pub divergence: Option<Error>,
}

fn should_observe(done: usize, opts: &RunOptions) -> bool {
    done == opts.max_iter || done.is_multiple_of(opts.stride)
}

fn check_run_options(opts: &RunOptions) -> Result<()> {
    if opts.stride == 0 {
        return Err(Error::Contract("observer stride must be at least 1".into()));
    }
    Ok(())
}

/// Iterates [`sipba_step`] from `init` for up to `opts.max_iter` steps.
///
/// `observer` may stop the run early by returning [`Control::Stop`]; the
/// summary then reports [`StopReason::TargetReached`].
pub fn run<T, P, F>(
    problem: &P,
    init: IterateState<T>,
    sp: &ScheduleParams<T>,
    opts: &RunOptions,
    mut observer: F,
) -> Result<RunSummary<T>>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
    F: FnMut(&IterateState<T>, Progress) -> Control,
{
    check_run_options(opts)?;
    sp.validate()?;
    let mut state = IterateState::start(problem, init.x, init.y, init.z)?;
    state.k = init.k.max(1);
    let mut elapsed = Duration::ZERO;
    let mut done = 0;
    while done < opts.max_iter {
        let t0 = Instant::now();
        let next = sipba_step(problem, &state, sp);
        elapsed += t0.elapsed();
        match next {
            Ok(next) => state = next,
            Err(e @ Error::Divergence { .. }) => {
                return Ok(RunSummary {
                    state,
                    iterations: done,
                    stop: StopReason::Diverged,
                    elapsed,
                    divergence: Some(e),
                })
            }
            Err(e) => return Err(e),
        }
        done += 1;
        if should_observe(done, opts)
            && observer(&state, Progress { iterations: done, elapsed }) == Control::Stop
        {
            return Ok(RunSummary {
                state,
                iterations: done,
                stop: StopReason::TargetReached,
                elapsed,
                divergence: None,
            });
        }
    }
    Ok(RunSummary {
        state,
        iterations: done,
        stop: StopReason::MaxIter,
        elapsed,
        divergence: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions<T> {
    pub outer_iter: usize,
    pub inner_tol: T,
    pub inner_max_iter: usize,
    pub inner_method: SaddleMethod,
    pub stride: usize,
}

impl<T: Scalar> BaselineOptions<T> {
    pub fn new(outer_iter: usize, inner_tol: T) -> Self {
        Self {
            outer_iter,
            inner_tol,
            inner_max_iter: crate::saddle::DEFAULT_MAX_ITER,
            inner_method: SaddleMethod::default(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary<T> {
    /// `x` after the last outer step; `(y, z)` is the last saddle iterate.
    pub state: IterateState<T>,
    pub iterations: usize,
    pub stop: StopReason,
    pub elapsed: Duration,
    pub divergence: Option<Error>,
    /// Oracle iterations summed over all outer steps.
    pub inner_iterations: usize,
    /// Outer steps whose saddle solve missed `inner_tol`.
    pub inner_failures: usize,
}

/// Projected gradient descent on `φ_{ρ_k,σ_k}` with the oracle gradient,
/// using the same `(α_k, ρ_k, σ_k)` schedule as the single-loop solver.
/// Each saddle solve is warm-started from the previous one.
pub fn run_double_loop_baseline<T, P, F>(
    problem: &P,
    init: IterateState<T>,
    sp: &ScheduleParams<T>,
    opts: &BaselineOptions<T>,
    mut observer: F,
) -> Result<BaselineSummary<T>>
where
    T: Scalar,
    P: BilevelProblem<T> + ?Sized,
    F: FnMut(&IterateState<T>, Progress) -> Control,
{
    if !(opts.inner_tol > T::zero()) {
        return Err(Error::Contract(format!("inner_tol must be positive, got {}", opts.inner_tol)));
    }
    let run_opts = RunOptions {
        max_iter: opts.outer_iter,
        stride: opts.stride,
    };
    check_run_options(&run_opts)?;
    sp.validate()?;
    let inner = SaddleOptions::new(opts.inner_tol)
        .with_max_iter(opts.inner_max_iter)
        .with_method(opts.inner_method);

    let mut state = IterateState::start(problem, init.x, init.y, init.z)?;
    state.k = init.k.max(1);
    let mut u = state.y.clone();
    u.extend_from_slice(&state.z);

    let mut summary = BaselineSummary {
        state: state.clone(),
        iterations: 0,
        stop: StopReason::MaxIter,
        elapsed: Duration::ZERO,
        divergence: None,
        inner_iterations: 0,
        inner_failures: 0,
    };
    let mut done = 0;
    while done < opts.outer_iter {
        let t0 = Instant::now();
        let outcome = outer_step(problem, &state, sp, &inner, &u);
        summary.elapsed += t0.elapsed();
        match outcome {
            Ok((next, saddle_u, inner_iters, converged)) => {
                summary.inner_iterations += inner_iters;
                if !converged {
                    summary.inner_failures += 1;
                }
                u = saddle_u;
                state = next;
            }
            Err(e @ (Error::Divergence { .. } | Error::NonFinite { .. } | Error::StepUnderflow { .. })) => {
                summary.state = state;
                summary.iterations = done;
                summary.stop = StopReason::Diverged;
                summary.divergence = Some(e);
                return Ok(summary);
            }
            Err(e) => return Err(e),
        }
        done += 1;
        let progress = Progress {
            iterations: done,
            elapsed: summary.elapsed,
        };
        if should_observe(done, &run_opts) && observer(&state, progress) == Control::Stop {
            summary.stop = StopReason::TargetReached;
            break;
        }
    }
    summary.state = state;
    summary.iterations = done;
    Ok(summary)
}

type OuterStep<T> = (IterateState<T>, Vec<T>, usize, bool);

fn outer_step<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    state: &IterateState<T>,
    sp: &ScheduleParams<T>,
    inner: &SaddleOptions<T>,
    warm: &[T],
) -> Result<OuterStep<T>> {
    let k = state.k;
    let step = sp.params_at(k)?;
    let pr = step.penalty()?;
    let saddle = iterate_saddle(problem, pr, &state.x, warm, inner)?;
    let converged = saddle.residual <= inner.tol;
    if !converged {
        log::debug!(
            "baseline outer step {k}: saddle residual {} above {}",
            saddle.residual,
            inner.tol
        );
    }
    let g = direction_x(problem, pr, &state.x, &saddle.y_star, &saddle.z_star)
        .map_err(diverged(k, "oracle gradient"))?;
    let mut x = state.x.clone();
    linalg::axpy(-step.alpha, &g, &mut x);
    problem.set_x().project_in_place(&mut x);
    let next = IterateState {
        x,
        y: saddle.y_star.clone(),
        z: saddle.z_star.clone(),
        k: k + 1,
    };
    if !next.is_finite() {
        return Err(Error::Divergence { k, what: "iterate" });
    }
    let u = saddle.stacked();
    Ok((next, u, saddle.iterations_used, converged))
}
