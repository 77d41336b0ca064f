//! The five harness commands. Each writes its CSV files under the output
//! directory and returns the in-memory results.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sipba_core::diagnostics::{check_phi_gradient, sandwich_check, SandwichReport, SandwichRow};
use sipba_core::problem::check_gradients;
use sipba_core::{PenaltyReg, SaddleOptions, SyntheticProblem};

use crate::config::{GridRow, RunConfig};
use crate::error::{CliError, Result};
use crate::experiment::{run_baseline, run_sipba, BaselineSettings, RunOutcome, RunSettings};
use crate::instance::Instance;
use crate::output::{num, opt, CsvWriter};

/// Where and how wide a command runs.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Context {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            jobs: None,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs);
        self
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn parallel<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            builder = builder.num_threads(j);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {:?} worker threads: {e}", self.jobs)))?;
        Ok(pool.install(f))
    }
}

fn warn_heuristic(instance: &Instance) {
    if let Some(v) = sipba_core::BilevelProblem::assumption_violation(instance) {
        log::warn!("{} instance runs in the heuristic regime: {v}", instance.label());
    }
}

fn run_settings(cfg: &RunConfig, diagnostics: bool) -> RunSettings {
    RunSettings {
        max_iter: cfg.max_iter,
        stride: cfg.diag_stride,
        oracle_tol: diagnostics.then_some(cfg.oracle_tol),
        target: cfg.target_eps_rel,
        stop_at_target: cfg.stop_at_target,
    }
}

/// Table-1 style statistics over a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub runs: usize,
    pub completed_runs: usize,
    pub valid_runs: usize,
    pub min_final: Option<f64>,
    pub max_final: Option<f64>,
    pub mean_time_to_target_s: Option<f64>,
    pub std_time_to_target_s: Option<f64>,
    pub mean_iters_to_target: Option<f64>,
    pub std_iters_to_target: Option<f64>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (Some(mean), Some(var.sqrt()))
}

impl RunStats {
    pub fn from_outcomes(outcomes: &[RunOutcome]) -> Self {
        let completed: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.divergence.is_none()).collect();
        let finals: Vec<f64> = completed.iter().filter_map(|o| o.final_metric).collect();
        let valid: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.reached_target()).collect();
        let times: Vec<f64> = valid.iter().filter_map(|o| o.time_to_target_s).collect();
        let iters: Vec<f64> = valid.iter().filter_map(|o| o.iters_to_target.map(|k| k as f64)).collect();
        let (mean_time, std_time) = mean_std(&times);
        let (mean_iters, std_iters) = mean_std(&iters);
        Self {
            runs: outcomes.len(),
            completed_runs: completed.len(),
            valid_runs: valid.len(),
            min_final: finals.iter().copied().reduce(f64::min),
            max_final: finals.iter().copied().reduce(f64::max),
            mean_time_to_target_s: mean_time,
            std_time_to_target_s: std_time,
            mean_iters_to_target: mean_iters,
            std_iters_to_target: std_iters,
        }
    }
}

pub const RUN_COLUMNS: [&str; 8] = [
    "run_id",
    "k",
    "time_s",
    "phi_k",
    "eps_rel",
    "tracking_err",
    "stat_residual",
    "merit",
];

fn write_run_csv(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let mut w = CsvWriter::create(path, &RUN_COLUMNS)?;
    for r in &outcome.records {
        w.row(vec![
            outcome.run_id.to_string(),
            r.k.to_string(),
            num(r.elapsed_s),
            num(r.phi_k),
            opt(r.eps_rel),
            num(r.tracking_err),
            num(r.stat_residual),
            num(r.merit),
        ])?;
    }
    w.finish()
}

fn write_outcomes(path: &Path, groups: &[(&str, &[RunOutcome])]) -> Result<()> {
    let mut w = CsvWriter::create(
        path,
        &[
            "method",
            "run_id",
            "seed",
            "iterations",
            "stop",
            "grad_evals",
            "time_s",
            "initial_metric",
            "final_metric",
            "iters_to_target",
            "evals_to_target",
            "time_to_target_s",
            "oracle_failures",
        ],
    )?;
    for (method, o) in groups.iter().flat_map(|(m, os)| os.iter().map(move |o| (m, o))) {
        w.row(vec![
            method.to_string(),
            o.run_id.to_string(),
            o.seed.to_string(),
            o.iterations.to_string(),
            o.stop.to_string(),
            o.grad_evals.to_string(),
            num(o.elapsed_s),
            opt(o.initial_metric),
            opt(o.final_metric),
            o.iters_to_target.map(|k| k.to_string()).unwrap_or_default(),
            o.evals_to_target.map(|k| k.to_string()).unwrap_or_default(),
            opt(o.time_to_target_s),
            o.oracle_failures.to_string(),
        ])?;
    }
    w.finish()
}

fn collect_runs(results: Vec<Result<RunOutcome>>) -> Result<Vec<RunOutcome>> {
    results.into_iter().collect()
}

fn require_completion(outcomes: &[RunOutcome]) -> Result<()> {
    if !outcomes.is_empty() && outcomes.iter().all(|o| o.divergence.is_some()) {
        return Err(CliError::Numerical(format!("all {} runs diverged", outcomes.len())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcomes: Vec<RunOutcome>,
    pub stats: RunStats,
}

/// One solver run per seed, each with its own diagnostics CSV, followed by
/// `runs.csv` and `summary.csv`.
pub fn cmd_run(cfg: &RunConfig, ctx: &Context) -> Result<RunReport> {
    let instance = Instance::build(&cfg.problem)?;
    warn_heuristic(&instance);
    let sp = cfg.schedule_params()?;
    let settings = run_settings(cfg, true);
    let seeds: Vec<u64> = cfg.seeds().collect();
    let results = ctx.parallel(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let outcome = run_sipba(&instance, &sp, &settings, i, seed)?;
                write_run_csv(&ctx.path(&format!("run_{i:03}.csv")), &outcome)?;
                Ok(outcome)
            })
            .collect::<Vec<_>>()
    })?;
    let outcomes = collect_runs(results)?;
    write_outcomes(&ctx.path("runs.csv"), &[("sipba", &outcomes)])?;
    let stats = RunStats::from_outcomes(&outcomes);
    let mut w = CsvWriter::create(
        &ctx.path("summary.csv"),
        &[
            "problem",
            "metric",
            "runs",
            "completed_runs",
            "valid_runs",
            "target",
            "min_final",
            "max_final",
            "mean_time_to_target_s",
            "mean_iters_to_target",
        ],
    )?;
    w.row(vec![
        instance.label().into(),
        instance.metric().name().into(),
        stats.runs.to_string(),
        stats.completed_runs.to_string(),
        stats.valid_runs.to_string(),
        opt(cfg.target_eps_rel),
        opt(stats.min_final),
        opt(stats.max_final),
        opt(stats.mean_time_to_target_s),
        opt(stats.mean_iters_to_target),
    ])?;
    w.finish()?;
    require_completion(&outcomes)?;
    Ok(RunReport { outcomes, stats })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub row: GridRow,
    pub stats: RunStats,
}

/// Runs every seed for every grid row without oracle diagnostics and writes
/// `ablation.csv` with mean ± std time and iterations to target.
pub fn cmd_ablate(cfg: &RunConfig, ctx: &Context) -> Result<Vec<AblationRow>> {
    let instance = Instance::build(&cfg.problem)?;
    warn_heuristic(&instance);
    let rows = cfg.grid_rows();
    let schedules = rows
        .iter()
        .map(|r| cfg.schedule.with_row(r).params())
        .collect::<Result<Vec<_>>>()?;
    let settings = run_settings(cfg, false);
    let seeds: Vec<u64> = cfg.seeds().collect();
    let jobs: Vec<(usize, usize, u64)> = (0..rows.len())
        .flat_map(|r| seeds.iter().enumerate().map(move |(i, &s)| (r, i, s)))
        .collect();
    let results = ctx.parallel(|| {
        jobs.par_iter()
            .map(|&(r, i, seed)| run_sipba(&instance, &schedules[r], &settings, i, seed).map(|o| (r, o)))
            .collect::<Vec<_>>()
    })?;
    let mut per_row: Vec<Vec<RunOutcome>> = vec![Vec::new(); rows.len()];
    for res in results {
        let (r, o) = res?;
        per_row[r].push(o);
    }
    let mut w = CsvWriter::create(
        &ctx.path("ablation.csv"),
        &[
            "row",
            "alpha0",
            "beta0",
            "p",
            "q",
            "s",
            "runs",
            "valid_runs",
            "mean_time_s",
            "std_time_s",
            "mean_iters",
            "std_iters",
            "max_final",
        ],
    )?;
    let mut report = Vec::with_capacity(rows.len());
    for (i, (row, outcomes)) in rows.iter().zip(&per_row).enumerate() {
        let stats = RunStats::from_outcomes(outcomes);
        w.row(vec![
            i.to_string(),
            num(row.alpha0),
            num(row.beta0),
            num(row.p),
            num(row.q),
            num(row.s),
            stats.runs.to_string(),
            stats.valid_runs.to_string(),
            opt(stats.mean_time_to_target_s),
            opt(stats.std_time_to_target_s),
            opt(stats.mean_iters_to_target),
            opt(stats.std_iters_to_target),
            opt(stats.max_final),
        ])?;
        report.push(AblationRow { row: *row, stats });
    }
    w.finish()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub check: String,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    /// `None` when the oracle failed.
    pub max_rel_error: Option<f64>,
    pub pass: bool,
}

/// Finite-difference validation of the problem gradients and of the
/// value-function gradient. Fails with an acceptance violation when any
/// error reaches the threshold.
pub fn cmd_gradcheck(cfg: &RunConfig, ctx: &Context) -> Result<Vec<GradcheckRow>> {
    let instance = Instance::build(&cfg.problem)?;
    let g = &cfg.gradcheck;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    let passes = |e: f64| e < g.threshold;
    let mut rows = Vec::new();

    let report = check_gradients(&instance, g.trials, g.step, &mut rng)?;
    for (name, e) in [
        ("upper_grad_x", report.upper_x),
        ("upper_grad_y", report.upper_y),
        ("lower_grad_x", report.lower_x),
        ("lower_grad_y", report.lower_y),
    ] {
        rows.push(GradcheckRow {
            check: name.into(),
            rho: None,
            sigma: None,
            max_rel_error: Some(e),
            pass: passes(e),
        });
    }
    let opts = SaddleOptions::new(g.oracle_tol);
    for &(rho, sigma) in &g.pairs {
        let pr = PenaltyReg::new(rho, sigma)?;
        let err = match check_phi_gradient(&instance, pr, g.trials, g.step, &opts, &mut rng) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("value-function gradient check failed at rho = {rho}, sigma = {sigma}: {e}");
                None
            }
        };
        rows.push(GradcheckRow {
            check: "grad_phi".into(),
            rho: Some(rho),
            sigma: Some(sigma),
            max_rel_error: err,
            pass: err.is_some_and(passes),
        });
    }

    let mut w = CsvWriter::create(
        &ctx.path("gradcheck.csv"),
        &["problem", "check", "rho", "sigma", "max_rel_error", "threshold", "pass"],
    )?;
    for r in &rows {
        log::info!(
            "{:<14} rho={:<8} sigma={:<8} max_rel_error={}",
            r.check,
            r.rho.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            r.sigma.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            r.max_rel_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "oracle failure".into()),
        );
        w.row(vec![
            instance.label().into(),
            r.check.clone(),
            opt(r.rho),
            opt(r.sigma),
            opt(r.max_rel_error),
            num(g.threshold),
            r.pass.to_string(),
        ])?;
    }
    w.finish()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::Acceptance(format!(
            "{failed} of {} gradient checks reached the threshold {:e}",
            rows.len(),
            g.threshold
        )));
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub sipba: Vec<RunOutcome>,
    pub baseline: Vec<RunOutcome>,
}

/// Runs the solver and the double-loop baseline on the same seeds and writes
/// aligned convergence curves against gradient evaluations and time.
pub fn cmd_compare(cfg: &RunConfig, ctx: &Context) -> Result<CompareReport> {
    let instance = Instance::build(&cfg.problem)?;
    warn_heuristic(&instance);
    let sp = cfg.schedule_params()?;
    let settings = run_settings(cfg, false);
    let seeds: Vec<u64> = cfg.seeds().collect();
    let outer_iter = cfg.baseline.outer_iter.unwrap_or(cfg.max_iter);
    let results = ctx.parallel(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let ours = run_sipba(&instance, &sp, &settings, i, seed)?;
                let baseline = BaselineSettings {
                    outer_iter,
                    inner_tol: cfg.baseline.inner_tol,
                    eval_budget: cfg.baseline.match_budget.then_some(ours.grad_evals),
                };
                let theirs = run_baseline(&instance, &sp, &settings, &baseline, i, seed)?;
                Ok((ours, theirs))
            })
            .collect::<Vec<Result<_>>>()
    })?;
    let (sipba, baseline): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let metric = instance.metric().name();
    let mut w = CsvWriter::create(
        &ctx.path("compare_curves.csv"),
        &["method", "run_id", "iteration", "grad_evals", "time_s", "metric", "value"],
    )?;
    for (method, outcomes) in [("sipba", &sipba), ("baseline", &baseline)] {
        for o in outcomes {
            for c in &o.curve {
                w.row(vec![
                    method.into(),
                    o.run_id.to_string(),
                    c.iteration.to_string(),
                    c.grad_evals.to_string(),
                    num(c.time_s),
                    metric.into(),
                    opt(c.metric),
                ])?;
            }
        }
    }
    w.finish()?;
    write_outcomes(&ctx.path("compare_summary.csv"), &[("sipba", &sipba), ("baseline", &baseline)])?;
    require_completion(&sipba)?;
    Ok(CompareReport { sipba, baseline })
}

#[derive(Debug, Clone)]
pub struct AsymptoticsPoint {
    pub label: String,
    pub x: Vec<f64>,
    /// Full grid in row-major `(ρ_i, σ_j)` order.
    pub grid: SandwichReport<f64>,
    /// The cells `(ρ_i, σ_i)`.
    pub diagonal: SandwichReport<f64>,
}

impl AsymptoticsPoint {
    pub fn violations(&self, slack: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !self.grid.lower_bounds_hold() {
            v.push(format!("lower bound violated at x = {}", self.label));
        }
        if !self.diagonal.gaps_monotone(slack) {
            v.push(format!("gap not monotone along the diagonal at x = {}", self.label));
        }
        v
    }
}

/// Sandwich and saddle-limit checks on the synthetic problem over a
/// `(ρ, σ)` grid; writes `asymptotics.csv`.
pub fn cmd_asymptotics(cfg: &RunConfig, ctx: &Context) -> Result<Vec<AsymptoticsPoint>> {
    let a = &cfg.asymptotics;
    let problem = SyntheticProblem::new(a.n)?;
    let points: Vec<(String, Vec<f64>)> = match &a.points {
        Some(ps) => ps.iter().enumerate().map(|(i, p)| (format!("p{i}"), p.clone())).collect(),
        None => vec![("e".into(), vec![1.0; a.n]), ("e/2".into(), vec![0.5; a.n])],
    };
    let grid: Vec<(f64, f64)> = a.rho.iter().flat_map(|&r| a.sigma.iter().map(move |&s| (r, s))).collect();
    let opts = SaddleOptions::new(a.oracle_tol);
    let dim = a.rho.len();

    let mut report = Vec::with_capacity(points.len());
    for (label, x) in points {
        let full = sandwich_check(&problem, &x, &grid, &opts, a.slack)?;
        let diagonal: Vec<SandwichRow<f64>> = (0..dim).map(|i| full.rows[i * dim + i].clone()).collect();
        report.push(AsymptoticsPoint {
            label,
            x,
            grid: full,
            diagonal: SandwichReport { rows: diagonal },
        });
    }

    let mut w = CsvWriter::create(
        &ctx.path("asymptotics.csv"),
        &[
            "point",
            "rho",
            "sigma",
            "diagonal",
            "phi_smooth",
            "phi",
            "gap",
            "lower_bound",
            "lower_bound_holds",
            "saddle_deviation",
        ],
    )?;
    for p in &report {
        for (c, r) in p.grid.rows.iter().enumerate() {
            w.row(vec![
                p.label.clone(),
                num(r.rho),
                num(r.sigma),
                (c / dim == c % dim).to_string(),
                num(r.phi_smooth),
                num(r.phi),
                num(r.gap),
                num(r.lower_bound),
                r.lower_bound_holds.to_string(),
                num(r.saddle_deviation),
            ])?;
        }
    }
    w.finish()?;
    let violations: Vec<String> = report.iter().flat_map(|p| p.violations(a.slack)).collect();
    if !violations.is_empty() {
        return Err(CliError::Acceptance(violations.join("; ")));
    }
    Ok(report)
}
