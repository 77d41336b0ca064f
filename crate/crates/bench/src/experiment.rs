//! Single runs of the solver and of the double-loop baseline, with the
//! measurements the commands serialize.

use sipba_core::diagnostics::{merit_value, oracle_diagnostics};
use sipba_core::solver::{run, run_double_loop_baseline, Control, Progress, RunOptions, StopReason};
use sipba_core::{
    BaselineOptions, Counting, DiagnosticsRecord, IterateState, MeritCoefficients, SaddleOptions, ScheduleParams,
};

use crate::error::Result;
use crate::instance::Instance;

/// Per-run measurement settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub max_iter: usize,
    /// Iterations between curve points and diagnostics rows.
    pub stride: usize,
    /// Oracle tolerance of the diagnostics; `None` disables them.
    pub oracle_tol: Option<f64>,
    pub target: Option<f64>,
    pub stop_at_target: bool,
}

/// One point of a convergence curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub grad_evals: u64,
    pub time_s: f64,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    pub iterations: usize,
    pub stop: &'static str,
    pub divergence: Option<String>,
    pub elapsed_s: f64,
    pub grad_evals: u64,
    pub initial_metric: Option<f64>,
    pub final_metric: Option<f64>,
    pub iters_to_target: Option<usize>,
    pub time_to_target_s: Option<f64>,
    pub evals_to_target: Option<u64>,
    pub records: Vec<DiagnosticsRecord>,
    pub oracle_failures: usize,
    pub curve: Vec<CurvePoint>,
    pub final_state: IterateState,
}

impl RunOutcome {
    pub fn reached_target(&self) -> bool {
        self.iters_to_target.is_some()
    }
}

fn stop_label(stop: StopReason) -> &'static str {
    match stop {
        StopReason::MaxIter => "max_iter",
        StopReason::TargetReached => "target_reached",
        StopReason::Diverged => "diverged",
    }
}

/// Tracks the first time the metric drops below the target.
#[derive(Default)]
struct TargetWatch {
    iters: Option<usize>,
    time_s: Option<f64>,
    evals: Option<u64>,
}

impl TargetWatch {
    fn observe(&mut self, metric: Option<f64>, target: Option<f64>, pg: Progress, evals: u64) -> bool {
        let hit = matches!((metric, target), (Some(m), Some(t)) if m < t);
        if hit && self.iters.is_none() {
            self.iters = Some(pg.iterations);
            self.time_s = Some(pg.elapsed.as_secs_f64());
            self.evals = Some(evals);
        }
        hit
    }
}

/// Runs the single-loop solver from the seeded initial point.
///
/// Diagnostics rows are taken every `settings.stride` iterations and at the
/// last iteration. Their `k` is the number of completed iterations; the oracle
/// quantities use the schedule parameters of the current iterate. Oracle time
/// is excluded from all reported times.
pub fn run_sipba(
    instance: &Instance,
    sp: &ScheduleParams,
    settings: &RunSettings,
    run_id: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let init = instance.initial(seed)?;
    let counted = Counting::new(instance);
    let oracle = settings.oracle_tol.map(SaddleOptions::new);
    let mut watch = TargetWatch::default();
    let mut records = Vec::new();
    let mut curve = Vec::new();
    let mut failures = 0;
    let mut first_error = None;

    let summary = run(&counted, init.clone(), sp, &RunOptions::new(settings.max_iter), |st, pg| {
        let metric = match instance.measure(st, &init) {
            Ok(m) => m,
            Err(e) => {
                first_error.get_or_insert(e);
                return Control::Stop;
            }
        };
        let evals = counted.gradient_evals();
        let stop = watch.observe(metric, settings.target, pg, evals) && settings.stop_at_target;
        if pg.iterations % settings.stride == 0 || pg.iterations == settings.max_iter || stop {
            curve.push(CurvePoint {
                iteration: pg.iterations,
                grad_evals: evals,
                time_s: pg.elapsed.as_secs_f64(),
                metric,
            });
            if let Some(opts) = &oracle {
                match oracle_diagnostics(instance, st, sp, opts, None) {
                    Ok(d) => records.push(DiagnosticsRecord {
                        k: pg.iterations,
                        phi_k: d.phi,
                        eps_rel: instance.eps_rel(st, &init).ok().flatten(),
                        tracking_err: d.tracking_err,
                        stat_residual: d.stat_residual,
                        merit: f64::NAN,
                        elapsed_s: pg.elapsed.as_secs_f64(),
                    }),
                    Err(e) => {
                        failures += 1;
                        log::warn!("run {run_id}: diagnostics oracle failed at k = {}: {e}", pg.iterations);
                    }
                }
            }
        }
        if stop {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if let Some(e) = first_error {
        return Err(e);
    }
    fill_merit(&mut records, sp)?;

    if let Some(e) = &summary.divergence {
        log::warn!("run {run_id} diverged after {} iterations: {e}", summary.iterations);
    }
    Ok(RunOutcome {
        run_id,
        seed,
        iterations: summary.iterations,
        stop: stop_label(summary.stop),
        divergence: summary.divergence.map(|e| e.to_string()),
        elapsed_s: summary.elapsed.as_secs_f64(),
        grad_evals: counted.gradient_evals(),
        initial_metric: instance.measure(&init, &init)?,
        final_metric: instance.measure(&summary.state, &init)?,
        iters_to_target: watch.iters,
        time_to_target_s: watch.time_s,
        evals_to_target: watch.evals,
        records,
        oracle_failures: failures,
        curve,
        final_state: summary.state,
    })
}

/// Sets `merit` on every record with `φ̲` one below the smallest observed `φ_k`.
fn fill_merit(records: &mut [DiagnosticsRecord], sp: &ScheduleParams) -> Result<()> {
    let min_phi = records.iter().map(|r| r.phi_k).fold(f64::INFINITY, f64::min);
    if !min_phi.is_finite() {
        return Ok(());
    }
    let mc = MeritCoefficients::from_observed(sp, min_phi);
    for r in records {
        r.merit = merit_value(&mc, sp, r.k + 1, r.phi_k, r.tracking_err)?;
    }
    Ok(())
}

/// Baseline settings beyond [`RunSettings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSettings {
    pub outer_iter: usize,
    pub inner_tol: f64,
    /// Stop once this many partial-gradient evaluations have been spent.
    pub eval_budget: Option<u64>,
}

/// Runs the double-loop baseline from the seeded initial point.
pub fn run_baseline(
    instance: &Instance,
    sp: &ScheduleParams,
    settings: &RunSettings,
    baseline: &BaselineSettings,
    run_id: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let init = instance.initial(seed)?;
    let counted = Counting::new(instance);
    let mut curve = Vec::new();
    let mut watch = TargetWatch::default();
    let mut budget_hit = false;
    let mut first_error = None;
    let opts = BaselineOptions::new(baseline.outer_iter, baseline.inner_tol);

    let summary = run_double_loop_baseline(&counted, init.clone(), sp, &opts, |st: &IterateState, pg| {
        let metric = match instance.measure(st, &init) {
            Ok(m) => m,
            Err(e) => {
                first_error.get_or_insert(e);
                return Control::Stop;
            }
        };
        let evals = counted.gradient_evals();
        let target_stop = watch.observe(metric, settings.target, pg, evals) && settings.stop_at_target;
        budget_hit = baseline.eval_budget.is_some_and(|b| evals >= b);
        let stop = target_stop || budget_hit;
        if pg.iterations % settings.stride == 0 || pg.iterations == baseline.outer_iter || stop {
            curve.push(CurvePoint {
                iteration: pg.iterations,
                grad_evals: evals,
                time_s: pg.elapsed.as_secs_f64(),
                metric,
            });
        }
        if stop {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if let Some(e) = first_error {
        return Err(e);
    }
    let stop = match summary.stop {
        StopReason::TargetReached if budget_hit => "budget",
        other => stop_label(other),
    };
    Ok(RunOutcome {
        run_id,
        seed,
        iterations: summary.iterations,
        stop,
        divergence: summary.divergence.map(|e| e.to_string()),
        elapsed_s: summary.elapsed.as_secs_f64(),
        grad_evals: counted.gradient_evals(),
        initial_metric: instance.measure(&init, &init)?,
        final_metric: instance.measure(&summary.state, &init)?,
        iters_to_target: watch.iters,
        time_to_target_s: watch.time_s,
        evals_to_target: watch.evals,
        records: Vec::new(),
        oracle_failures: summary.inner_failures,
        curve,
        final_state: summary.state,
    })
}
