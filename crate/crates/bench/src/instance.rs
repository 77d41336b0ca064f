//! Problem selection for the harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sipba_core::benchmarks::KnownOptimum;
use sipba_core::diagnostics::relative_error;
use sipba_core::ProjectableSet;
use sipba_core::{BilevelProblem, HyperRepData, HyperRepProblem, IterateState, QuadraticTestbed, SyntheticProblem};

use crate::config::ProblemConfig;
use crate::error::Result;

/// A configured benchmark instance.
#[derive(Debug, Clone)]
pub enum Instance {
    Synthetic(SyntheticProblem),
    HyperRep { problem: Box<HyperRepProblem>, init_scale: f64 },
    Quadratic { problem: QuadraticTestbed, x0: f64 },
}

/// The convergence measure reported along curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    EpsRel,
    TestLoss,
    None,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::EpsRel => "eps_rel",
            Self::TestLoss => "test_loss",
            Self::None => "none",
        }
    }
}

impl Instance {
    pub fn build(cfg: &ProblemConfig) -> Result<Self> {
        Ok(match *cfg {
            ProblemConfig::Synthetic { n } => Self::Synthetic(SyntheticProblem::new(n)?),
            ProblemConfig::HyperRep {
                n_feat,
                p_dim,
                m1,
                m2,
                m_test,
                noise,
                data_seed,
                init_scale,
            } => {
                let data = HyperRepData::generate(n_feat, p_dim, m1, m2, m_test, noise, data_seed)?;
                Self::HyperRep {
                    problem: Box::new(HyperRepProblem::new(data)),
                    init_scale,
                }
            }
            ProblemConfig::Quadratic { x0 } => Self::Quadratic {
                problem: QuadraticTestbed::new(),
                x0,
            },
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Synthetic(_) => "synthetic",
            Self::HyperRep { .. } => "hyper_rep",
            Self::Quadratic { .. } => "quadratic",
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Self::Synthetic(_) => Metric::EpsRel,
            Self::HyperRep { .. } => Metric::TestLoss,
            Self::Quadratic { .. } => Metric::None,
        }
    }

    fn problem(&self) -> &dyn BilevelProblem<f64> {
        match self {
            Self::Synthetic(p) => p,
            Self::HyperRep { problem, .. } => problem,
            Self::Quadratic { problem, .. } => problem,
        }
    }

    /// Initial state for the run seeded with `seed`.
    pub fn initial(&self, seed: u64) -> Result<IterateState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = match self {
            Self::Synthetic(p) => p.sample_initial(&mut rng),
            Self::HyperRep { problem, init_scale } => {
                // the data generator draws from stream 0 of its own seed
                rng.set_stream(1);
                problem.sample_initial(&mut rng, *init_scale)
            }
            Self::Quadratic { x0, .. } => (vec![*x0], vec![*x0], vec![*x0]),
        };
        Ok(IterateState::start(self, x, y, z)?)
    }

    /// `ε_rel` of `state` relative to `init`, for instances with a known optimum.
    pub fn eps_rel(&self, state: &IterateState, init: &IterateState) -> Result<Option<f64>> {
        let Self::Synthetic(p) = self else {
            return Ok(None);
        };
        let (xs, ys) = p.optimum();
        Ok(Some(relative_error(&state.x, &state.y, &xs, &ys, &init.x, &init.y)?))
    }

    /// Held-out loss, for the hyper-representation instance.
    pub fn test_loss(&self, state: &IterateState) -> Option<f64> {
        match self {
            Self::HyperRep { problem, .. } => Some(problem.test_loss(&state.x, &state.y)),
            _ => None,
        }
    }

    /// The curve metric at `state`.
    pub fn measure(&self, state: &IterateState, init: &IterateState) -> Result<Option<f64>> {
        match self.metric() {
            Metric::EpsRel => self.eps_rel(state, init),
            Metric::TestLoss => Ok(self.test_loss(state)),
            Metric::None => Ok(None),
        }
    }
}

impl BilevelProblem<f64> for Instance {
    fn dim_x(&self) -> usize {
        self.problem().dim_x()
    }
    fn dim_y(&self) -> usize {
        self.problem().dim_y()
    }
    fn upper(&self, x: &[f64], y: &[f64]) -> f64 {
        self.problem().upper(x, y)
    }
    fn upper_grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.problem().upper_grad_x(x, y)
    }
    fn upper_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.problem().upper_grad_y(x, y)
    }
    fn lower(&self, x: &[f64], y: &[f64]) -> f64 {
        self.problem().lower(x, y)
    }
    fn lower_grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.problem().lower_grad_x(x, y)
    }
    fn lower_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.problem().lower_grad_y(x, y)
    }
    fn set_x(&self) -> &ProjectableSet {
        self.problem().set_x()
    }
    fn set_y(&self) -> &ProjectableSet {
        self.problem().set_y()
    }
    fn mu(&self) -> f64 {
        self.problem().mu()
    }
    fn lip_upper(&self) -> f64 {
        self.problem().lip_upper()
    }
    fn lip_lower(&self) -> f64 {
        self.problem().lip_lower()
    }
    fn assumption_violation(&self) -> Option<&'static str> {
        self.problem().assumption_violation()
    }
}
