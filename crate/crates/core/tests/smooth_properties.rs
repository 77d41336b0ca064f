use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sipba_core::linalg::{dist, dist_sq, dot, relative_deviation, sub};
use sipba_core::problem::central_difference;
use sipba_core::saddle::{grad_phi, solve_saddle, SaddleOptions};
use sipba_core::smooth::{direction_x, direction_y, direction_z, eval_psi, operator_lipschitz, operator_t};
use sipba_core::{BilevelProblem, HyperRepData, HyperRepProblem, PenaltyReg, QuadraticTestbed, SyntheticProblem};

const TUPLES: usize = 100;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&u, &v)| t * u + (1.0 - t) * v).collect()
}

/// Random `(x, y₁, y₂)` inside a bounded region of `X × Y × Y`.
fn sample_point<P: BilevelProblem<f64>>(p: &P, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = p.set_x().sample_interior(rng, 5.0);
    let y1 = p.set_y().sample_interior(rng, 5.0);
    let y2 = p.set_y().sample_interior(rng, 5.0);
    (x, y1, y2)
}

/// `g(t·a + (1−t)·b) − t·g(a) − (1−t)·g(b) − (κ/2)·t(1−t)·‖a − b‖²`, which is
/// nonnegative for a κ-strongly concave `g`.
fn concavity_slack(g: impl Fn(&[f64]) -> f64, a: &[f64], b: &[f64], t: f64, kappa: f64) -> f64 {
    g(&lerp(a, b, t)) - t * g(a) - (1.0 - t) * g(b) - 0.5 * kappa * t * (1.0 - t) * dist_sq(a, b)
}

fn check_secant_inequalities<P: BilevelProblem<f64>>(p: &P, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..TUPLES {
        let (x, y1, y2) = sample_point(p, &mut rng);
        let t = rng.random_range(0.0..1.0);
        let rho = rng.random_range(0.1..10.0);
        let sigma = rng.random_range(0.01..1.0);
        let pr = PenaltyReg::new(rho, sigma).unwrap();
        let z = p.set_y().sample_interior(&mut rng, 5.0);

        let upper = concavity_slack(|y| p.upper(&x, y), &y1, &y2, t, p.mu());
        let lower = concavity_slack(|y| -p.lower(&x, y), &y1, &y2, t, 0.0);
        let psi_y = concavity_slack(|y| eval_psi(p, pr, &x, y, &z).unwrap(), &y1, &y2, t, p.mu());
        let psi_z = concavity_slack(|w| -eval_psi(p, pr, &x, &z, w).unwrap(), &y1, &y2, t, sigma);
        for (name, s) in [("F", upper), ("f", lower), ("psi in y", psi_y), ("psi in z", psi_z)] {
            assert!(s >= -1e-10, "{name}: secant slack {s:e}");
        }
    }
}

#[test]
fn secant_inequalities_on_synthetic() {
    check_secant_inequalities(&SyntheticProblem::new(4).unwrap(), 1);
}

#[test]
fn secant_inequalities_on_quadratic() {
    check_secant_inequalities(&QuadraticTestbed::new(), 2);
}

#[test]
fn hyper_rep_lower_level_is_convex_and_flagged() {
    let data = HyperRepData::generate(6, 3, 40, 40, 10, 0.1, 3).unwrap();
    let p = HyperRepProblem::new(data);
    assert!(p.assumption_violation().is_some());
    assert_eq!(p.mu(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..TUPLES {
        let (x, y1, y2) = sample_point(&p, &mut rng);
        let t = rng.random_range(0.0..1.0);
        let scale = 1.0 + p.lower(&x, &y1).abs() + p.lower(&x, &y2).abs();
        let s = concavity_slack(|y| -p.lower(&x, y), &y1, &y2, t, 0.0);
        assert!(s >= -1e-12 * scale, "secant slack {s:e}");
    }
}

/// Checks strong monotonicity and the Lipschitz bound of `T` on pairs drawn
/// from `[y_lo, y_hi]^{2m}`.
fn check_operator_bounds<P: BilevelProblem<f64>>(p: &P, y_lo: f64, y_hi: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.dim_y();
    for _ in 0..TUPLES {
        let x = p.set_x().sample_interior(&mut rng, 5.0);
        let pr = PenaltyReg::new(rng.random_range(0.1..100.0), rng.random_range(1e-3..1.0)).unwrap();
        let u = uniform(&mut rng, y_lo, y_hi, 2 * m);
        let v = uniform(&mut rng, y_lo, y_hi, 2 * m);
        let (uy, uz) = u.split_at(m);
        let (vy, vz) = v.split_at(m);
        let tu = operator_t(p, pr, &x, uy, uz).unwrap();
        let tv = operator_t(p, pr, &x, vy, vz).unwrap();
        let dt = sub(&tu, &tv);
        let du = sub(&u, &v);

        let lower = p.mu() * dist_sq(uy, vy) + pr.sigma * dist_sq(uz, vz);
        let inner = dot(&dt, &du);
        assert!(inner >= lower - 1e-9 * (1.0 + lower), "monotonicity: {inner:e} < {lower:e}");

        let lip = operator_lipschitz(p, pr);
        let ratio = dist(&tu, &tv) / dist(&u, &v);
        assert!(ratio <= lip * (1.0 + 1e-12), "Lipschitz: {ratio} > {lip}");
    }
}

#[test]
fn operator_is_strongly_monotone_and_lipschitz_on_quadratic() {
    check_operator_bounds(&QuadraticTestbed::new(), -10.0, 10.0, 4);
}

#[test]
fn operator_is_strongly_monotone_and_lipschitz_on_synthetic() {
    // Lipschitz constants hold on y ≤ 3√n.
    let p = SyntheticProblem::new(4).unwrap();
    check_operator_bounds(&p, p.y_floor(), 6.0, 5);
}

fn check_directions_against_psi<P: BilevelProblem<f64>>(p: &P, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let (x, y, z) = sample_point(p, &mut rng);
        let pr = PenaltyReg::new(rng.random_range(0.1..10.0), rng.random_range(0.01..1.0)).unwrap();
        let dy = direction_y(p, pr, &x, &y, &z).unwrap();
        let dz = direction_z(p, pr, &x, &y, &z).unwrap();
        let dx = direction_x(p, pr, &x, &y, &z).unwrap();
        let fy = central_difference(&y, 1e-5, |v| eval_psi(p, pr, &x, v, &z).unwrap());
        let fz = central_difference(&z, 1e-5, |v| eval_psi(p, pr, &x, &y, v).unwrap());
        let fx = central_difference(&x, 1e-5, |v| eval_psi(p, pr, v, &y, &z).unwrap());
        assert!(relative_deviation(&dy, &fy) < 1e-6, "d_y {dy:?} vs {fy:?}");
        assert!(relative_deviation(&dz, &fz) < 1e-6, "d_z {dz:?} vs {fz:?}");
        assert!(relative_deviation(&dx, &fx) < 1e-6, "d_x {dx:?} vs {fx:?}");
    }
}

#[test]
fn directions_match_finite_differences_of_psi() {
    check_directions_against_psi(&QuadraticTestbed::new(), 6);
    check_directions_against_psi(&SyntheticProblem::new(4).unwrap(), 7);
    let data = HyperRepData::generate(5, 2, 30, 30, 10, 0.1, 8).unwrap();
    check_directions_against_psi(&HyperRepProblem::new(data), 8);
}

#[test]
fn x_direction_at_oracle_saddle_is_the_value_function_gradient() {
    let p = SyntheticProblem::new(4).unwrap();
    let opts = SaddleOptions::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let x = p.set_x().sample_interior(&mut rng, 5.0);
        let pr = PenaltyReg::new(100.0, 0.01).unwrap();
        let s = solve_saddle(&p, pr, &x, &opts).unwrap();
        let dx = direction_x(&p, pr, &x, &s.y_star, &s.z_star).unwrap();
        let g = grad_phi(&p, pr, &x, &opts).unwrap();
        assert!(relative_deviation(&dx, &g) < 1e-6);
    }
}

#[test]
fn operator_vanishes_at_analytic_saddle() {
    let p = QuadraticTestbed::new();
    for (x, rho, sigma) in [(1.0, 1.0, 1.0), (-2.5, 30.0, 0.02), (0.3, 1e3, 1e-3)] {
        let (y, z) = QuadraticTestbed::analytic_saddle(x, rho, sigma).unwrap();
        let pr = PenaltyReg::new(rho, sigma).unwrap();
        let t = operator_t(&p, pr, &[x], &[y], &[z]).unwrap();
        let scale = 1.0 + rho * x.abs();
        assert!(t.iter().all(|v| v.abs() < 1e-13 * scale), "{t:?}");
    }
}
