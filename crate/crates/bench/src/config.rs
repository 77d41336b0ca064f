//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sipba_core::ScheduleParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Synthetic {
        n: usize,
    },
    HyperRep {
        n_feat: usize,
        #[serde(default = "default_p_dim")]
        p_dim: usize,
        /// Validation samples.
        #[serde(default = "default_samples")]
        m1: usize,
        /// Training samples.
        #[serde(default = "default_samples")]
        m2: usize,
        #[serde(default = "default_samples")]
        m_test: usize,
        noise: f64,
        #[serde(default = "default_data_seed")]
        data_seed: u64,
        /// Standard deviation of the random initial `(H⁰, w⁰)`.
        #[serde(default = "one")]
        init_scale: f64,
    },
    Quadratic {
        /// Initial point; `y⁰ = z⁰ = x⁰`.
        #[serde(default = "one")]
        x0: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub beta0: f64,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    pub sigma0: f64,
    pub p: f64,
    pub q: f64,
    /// Required unless `guideline` is set, in which case it must be omitted.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "default_rho_cap")]
    pub rho_cap: f64,
    /// Forces `s = 8p + 8q`.
    #[serde(default)]
    pub guideline: bool,
}

impl ScheduleConfig {
    pub fn params(&self) -> Result<ScheduleParams> {
        let sp = match (self.guideline, self.s) {
            (true, None) => ScheduleParams::guideline(self.alpha0, self.beta0, self.rho0, self.sigma0, self.p, self.q),
            (false, Some(s)) => ScheduleParams::new(self.alpha0, self.beta0, self.rho0, self.sigma0, self.p, self.q, s),
            (true, Some(_)) => return Err(CliError::Config("schedule: `s` must be omitted in guideline mode".into())),
            (false, None) => return Err(CliError::Config("schedule: `s` is required unless `guideline` is true".into())),
        };
        sp.and_then(|sp| sp.with_rho_cap(self.rho_cap))
            .map_err(|e| CliError::Config(format!("schedule: {e}")))
    }

    /// Replaces the ablated parameters with those of `row`.
    pub fn with_row(&self, row: &GridRow) -> Self {
        Self {
            alpha0: row.alpha0,
            beta0: row.beta0,
            p: row.p,
            q: row.q,
            s: Some(row.s),
            guideline: false,
            ..*self
        }
    }
}

/// One ablation row: overrides of `(α₀, β₀, p, q, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    pub alpha0: f64,
    pub beta0: f64,
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

/// The twelve rows of the published ablation table on the synthetic problem.
pub fn reference_grid() -> Vec<GridRow> {
    let row = |alpha0, beta0, p, q, s| GridRow { alpha0, beta0, p, q, s };
    vec![
        row(0.1, 0.001, 0.001, 0.001, 0.1),
        row(1.0, 0.001, 0.001, 0.001, 0.1),
        row(0.01, 0.001, 0.001, 0.001, 0.1),
        row(0.1, 0.01, 0.001, 0.001, 0.1),
        row(0.1, 0.0001, 0.001, 0.001, 0.1),
        row(0.1, 0.001, 0.01, 0.001, 0.1),
        row(0.1, 0.001, 0.0001, 0.001, 0.1),
        row(0.1, 0.001, 0.001, 0.01, 0.1),
        row(0.1, 0.001, 0.001, 0.0001, 0.1),
        row(0.1, 0.001, 0.001, 0.001, 0.3),
        row(0.1, 0.001, 0.001, 0.001, 0.016),
        row(0.1, 0.001, 0.01, 0.01, 0.16),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Outer-iteration cap; defaults to `max_iter`.
    #[serde(default)]
    pub outer_iter: Option<usize>,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    /// Stop the baseline once its gradient-evaluation count reaches the
    /// single-loop run's total for the same seed.
    #[serde(default = "yes")]
    pub match_budget: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            outer_iter: None,
            inner_tol: default_inner_tol(),
            match_budget: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// `(ρ, σ)` pairs at which the value-function gradient is checked.
    #[serde(default = "default_gradcheck_pairs")]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default = "default_tight_tol")]
    pub oracle_tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            step: default_fd_step(),
            threshold: default_threshold(),
            pairs: default_gradcheck_pairs(),
            oracle_tol: default_tight_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    #[serde(default = "default_asym_n")]
    pub n: usize,
    /// Evaluation points; defaults to `e` and `e/2`.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_tight_tol")]
    pub oracle_tol: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            n: default_asym_n(),
            points: None,
            rho: vec![10.0, 1e2, 1e3, 1e4],
            sigma: vec![1e-1, 1e-2, 1e-3, 1e-4],
            slack: default_slack(),
            oracle_tol: default_tight_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    pub max_iter: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Run `i` uses seed `base_seed + i`.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub target_eps_rel: Option<f64>,
    /// End a run at the first iterate below `target_eps_rel`.
    #[serde(default)]
    pub stop_at_target: bool,
    /// Iterations between oracle-based diagnostics rows.
    #[serde(default = "default_stride")]
    pub diag_stride: usize,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Ablation rows; defaults to [`reference_grid`].
    #[serde(default)]
    pub grid: Option<Vec<GridRow>>,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default)]
    pub asymptotics: AsymptoticsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn schedule_params(&self) -> Result<ScheduleParams> {
        self.schedule.params()
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(move |i| self.base_seed.wrapping_add(i))
    }

    pub fn grid_rows(&self) -> Vec<GridRow> {
        self.grid.clone().unwrap_or_else(reference_grid)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        match &self.problem {
            ProblemConfig::Synthetic { n } if *n < 2 => return fail(format!("problem.n must be at least 2, got {n}")),
            ProblemConfig::HyperRep {
                n_feat,
                p_dim,
                m1,
                m2,
                m_test,
                noise,
                init_scale,
                ..
            } => {
                if [*n_feat, *p_dim, *m1, *m2, *m_test].contains(&0) {
                    return fail("problem: hyper_rep dimensions must be at least 1".into());
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return fail(format!("problem.noise must be finite and nonnegative, got {noise}"));
                }
                if !(*init_scale > 0.0 && init_scale.is_finite()) {
                    return fail(format!("problem.init_scale must be positive, got {init_scale}"));
                }
            }
            ProblemConfig::Quadratic { x0 } if !x0.is_finite() => {
                return fail(format!("problem.x0 must be finite, got {x0}"));
            }
            _ => {}
        }
        self.schedule_params()?;
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.diag_stride == 0 {
            return fail("diag_stride must be at least 1".into());
        }
        if !(self.oracle_tol > 0.0) {
            return fail(format!("oracle_tol must be positive, got {}", self.oracle_tol));
        }
        if let Some(t) = self.target_eps_rel {
            if !(t > 0.0) {
                return fail(format!("target_eps_rel must be positive, got {t}"));
            }
        }
        if !(self.baseline.inner_tol > 0.0) {
            return fail(format!("baseline.inner_tol must be positive, got {}", self.baseline.inner_tol));
        }
        if let Some(rows) = &self.grid {
            if rows.is_empty() {
                return fail("grid must contain at least one row".into());
            }
            for (i, row) in rows.iter().enumerate() {
                self.schedule
                    .with_row(row)
                    .params()
                    .map_err(|e| CliError::Config(format!("grid[{i}]: {e}")))?;
            }
        }
        let g = &self.gradcheck;
        if g.trials == 0 || !(g.step > 0.0) || !(g.oracle_tol > 0.0) || !(g.threshold >= 0.0) {
            return fail("gradcheck: trials >= 1, step > 0, oracle_tol > 0 and threshold >= 0 are required".into());
        }
        if g.pairs.iter().any(|&(r, s)| !(r > 0.0 && s > 0.0)) {
            return fail("gradcheck.pairs must hold positive (rho, sigma) values".into());
        }
        let a = &self.asymptotics;
        if a.n < 2 {
            return fail(format!("asymptotics.n must be at least 2, got {}", a.n));
        }
        if a.rho.is_empty() || a.rho.len() != a.sigma.len() {
            return fail("asymptotics.rho and asymptotics.sigma must be nonempty and of equal length".into());
        }
        if a.rho.iter().chain(&a.sigma).any(|&v| !(v > 0.0)) {
            return fail("asymptotics.rho and asymptotics.sigma must be positive".into());
        }
        if let Some(points) = &a.points {
            if points.is_empty() || points.iter().any(|p| p.len() != a.n) {
                return fail(format!("asymptotics.points must be nonempty vectors of length {}", a.n));
            }
        }
        Ok(())
    }
}

fn default_p_dim() -> usize {
    10
}
fn default_samples() -> usize {
    500
}
fn default_data_seed() -> u64 {
    1
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_rho0() -> f64 {
    10.0
}
fn default_rho_cap() -> f64 {
    sipba_core::schedule::DEFAULT_RHO_CAP
}
fn default_inner_tol() -> f64 {
    1e-6
}
fn default_trials() -> usize {
    20
}
fn default_fd_step() -> f64 {
    1e-5
}
fn default_threshold() -> f64 {
    1e-4
}
fn default_gradcheck_pairs() -> Vec<(f64, f64)> {
    vec![(1.0, 1.0), (10.0, 0.1), (100.0, 0.01)]
}
fn default_tight_tol() -> f64 {
    sipba_core::saddle::GROUND_TRUTH_TOL
}
fn default_asym_n() -> usize {
    4
}
fn default_slack() -> f64 {
    1e-8
}
fn default_runs() -> usize {
    1
}
fn default_stride() -> usize {
    100
}
fn default_oracle_tol() -> f64 {
    sipba_core::saddle::DIAGNOSTICS_TOL
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"kind": "synthetic", "n": 100},
        "schedule": {"alpha0": 0.1, "beta0": 0.001, "sigma0": 0.01, "p": 0.001, "q": 0.001, "s": 0.1},
        "max_iter": 20000
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.schedule.rho0, 10.0);
        assert_eq!(cfg.runs, 1);
        assert_eq!(cfg.diag_stride, 100);
        assert_eq!(cfg.grid_rows().len(), 12);
        assert_eq!(cfg.seeds().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RunConfig::from_json("{\n  \"problem\": {\"kind\": \"synthetic\", \"n\": 4},\n  \"bogus\": 1\n}").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let bad = MINIMAL.replace("\"max_iter\": 20000", "\"max_iter\": 0");
        assert_eq!(RunConfig::from_json(&bad).unwrap_err().exit_code(), 1);
        let bad = MINIMAL.replace("\"s\": 0.1", "\"s\": 0.7");
        assert_eq!(RunConfig::from_json(&bad).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn guideline_mode_rejects_explicit_s() {
        let bad = MINIMAL.replace("\"s\": 0.1", "\"s\": 0.1, \"guideline\": true");
        assert!(RunConfig::from_json(&bad).is_err());
        let ok = MINIMAL.replace(", \"s\": 0.1", ", \"guideline\": true");
        let cfg = RunConfig::from_json(&ok).unwrap();
        assert!((cfg.schedule_params().unwrap().s - 0.016).abs() < 1e-15);
    }

    #[test]
    fn reference_grid_starts_with_base_row() {
        let rows = reference_grid();
        assert_eq!(rows[0], GridRow { alpha0: 0.1, beta0: 0.001, p: 0.001, q: 0.001, s: 0.1 });
        assert_eq!(rows.iter().filter(|r| r.beta0 == 0.0001).count(), 1);
    }
}
