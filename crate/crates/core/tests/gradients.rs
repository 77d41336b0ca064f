use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sipba_core::diagnostics::{check_phi_gradient, lipschitz_phi_bound};
use sipba_core::linalg::dist;
use sipba_core::problem::check_gradients;
use sipba_core::saddle::{grad_phi, SaddleOptions};
use sipba_core::{
    BilevelProblem, HyperRepData, HyperRepProblem, PenaltyReg, ProjectableSet, QuadraticTestbed, SyntheticProblem,
};

const PAIRS: [(f64, f64); 4] = [(1.0, 1.0), (10.0, 0.1), (100.0, 0.01), (1e3, 1e-3)];

fn worst_phi_gradient_error<P: BilevelProblem<f64>>(p: &P, seed: u64) -> f64 {
    let opts = SaddleOptions::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PAIRS
        .iter()
        .map(|&(rho, sigma)| {
            let pr = PenaltyReg::new(rho, sigma).unwrap();
            check_phi_gradient(p, pr, 20, 1e-5, &opts, &mut rng).unwrap()
        })
        .fold(0.0, f64::max)
}

#[test]
fn value_function_gradient_matches_finite_differences() {
    assert!(worst_phi_gradient_error(&QuadraticTestbed::new(), 1) < 1e-6);
    for n in [4, 10] {
        let e = worst_phi_gradient_error(&SyntheticProblem::new(n).unwrap(), n as u64);
        assert!(e < 1e-4, "n = {n}: {e:e}");
    }
}

#[test]
fn value_function_gradient_on_hyper_rep_with_large_penalty() {
    // With ρ large enough, −ρf dominates the convex upper objective and the
    // saddle exists despite the violated concavity assumption.
    let data = HyperRepData::generate(4, 2, 40, 40, 10, 0.1, 5).unwrap();
    let p = HyperRepProblem::new(data);
    let opts = SaddleOptions::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = check_phi_gradient(&p, PenaltyReg::new(100.0, 0.01).unwrap(), 20, 1e-5, &opts, &mut rng).unwrap();
    assert!(e < 1e-4, "{e:e}");
}

#[test]
fn problem_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!(check_gradients(&QuadraticTestbed::new(), 50, 1e-6, &mut rng).unwrap().max() < 1e-5);
    assert!(check_gradients(&SyntheticProblem::new(7).unwrap(), 50, 1e-6, &mut rng).unwrap().max() < 1e-5);
    let data = HyperRepData::generate(8, 3, 50, 50, 10, 1.0, 2).unwrap();
    assert!(check_gradients(&HyperRepProblem::new(data), 20, 1e-5, &mut rng).unwrap().max() < 1e-4);
}

/// Scalar problem with `F(x,y) = −(y−x)²/2 − y²/2` and `f(x,y) = (y−x)²/2`
/// that declares `L_F = L_f = 1` and a caller-chosen `μ`.
struct UnitCurvature {
    mu: f64,
    set: ProjectableSet,
    negate_upper_grad: bool,
}

impl UnitCurvature {
    fn new(mu: f64) -> Self {
        Self {
            mu,
            set: ProjectableSet::full_space(1),
            negate_upper_grad: false,
        }
    }
}

impl BilevelProblem<f64> for UnitCurvature {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn upper(&self, x: &[f64], y: &[f64]) -> f64 {
        -0.5 * (y[0] - x[0]).powi(2) - 0.5 * y[0] * y[0]
    }
    fn upper_grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let g = y[0] - x[0];
        vec![if self.negate_upper_grad { -g } else { g }]
    }
    fn upper_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        vec![-(y[0] - x[0]) - y[0]]
    }
    fn lower(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * (y[0] - x[0]).powi(2)
    }
    fn lower_grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        vec![x[0] - y[0]]
    }
    fn lower_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        vec![y[0] - x[0]]
    }
    fn set_x(&self) -> &ProjectableSet {
        &self.set
    }
    fn set_y(&self) -> &ProjectableSet {
        &self.set
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lip_upper(&self) -> f64 {
        1.0
    }
    fn lip_lower(&self) -> f64 {
        1.0
    }
}

#[test]
fn lipschitz_bound_for_unit_constants() {
    let p = UnitCurvature::new(2.0);
    let pr = PenaltyReg::new(1.0, 1.0).unwrap();
    assert_abs_diff_eq!(lipschitz_phi_bound(&p, pr), 12.0, epsilon = 1e-15);
}

#[test]
fn negated_gradient_is_detected() {
    let mut p = UnitCurvature::new(2.0);
    p.negate_upper_grad = true;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let report = check_gradients(&p, 10, 1e-6, &mut rng).unwrap();
    assert_abs_diff_eq!(report.upper_x, 2.0, epsilon = 1e-6);
    assert!(report.upper_y < 1e-6);
}

#[test]
fn lipschitz_bound_dominates_observed_gradient_ratios() {
    let p = QuadraticTestbed::new();
    let opts = SaddleOptions::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let pr = PenaltyReg::new(10f64.powf(rng.random_range(-1.0..2.0)), 10f64.powf(rng.random_range(-2.0..1.0)))
            .unwrap();
        let a = [rng.random_range(-5.0..5.0)];
        let b = [rng.random_range(-5.0..5.0)];
        let ga = grad_phi(&p, pr, &a, &opts).unwrap();
        let gb = grad_phi(&p, pr, &b, &opts).unwrap();
        let ratio = dist(&ga, &gb) / dist(&a, &b);
        assert!(ratio <= lipschitz_phi_bound(&p, pr), "{ratio} > bound");
    }
}
