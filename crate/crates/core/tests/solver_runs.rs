use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sipba_core::benchmarks::{self, KnownOptimum};
use sipba_core::diagnostics::{relative_error, running_min, tracking_error};
use sipba_core::saddle::SaddleOptions;
use sipba_core::schedule::{self, ScheduleParams};
use sipba_core::solver::{run, run_double_loop_baseline, sipba_step, Control, IterateState, RunOptions, StopReason};
use sipba_core::{BaselineOptions, BilevelProblem, HyperRepData, HyperRepProblem, QuadraticTestbed, SyntheticProblem};

fn reference_schedule() -> ScheduleParams<f64> {
    ScheduleParams::new(0.1, 0.001, 10.0, 0.01, 0.001, 0.001, 0.1).unwrap()
}

fn synthetic_trajectory(seed: u64, iters: usize) -> Vec<IterateState<f64>> {
    let p = SyntheticProblem::new(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y, z) = p.sample_initial(&mut rng);
    let init = IterateState::start(&p, x, y, z).unwrap();
    let mut states = Vec::new();
    run(&p, init, &reference_schedule(), &RunOptions::new(iters), |st, _| {
        states.push(st.clone());
        Control::Continue
    })
    .unwrap();
    states
}

#[test]
fn matched_seeds_give_bit_identical_trajectories() {
    let a = synthetic_trajectory(3, 500);
    let b = synthetic_trajectory(3, 500);
    assert_eq!(a, b);
    assert_ne!(a, synthetic_trajectory(4, 500));
}

#[test]
fn every_emitted_state_is_feasible() {
    let p = SyntheticProblem::new(20).unwrap();
    for st in synthetic_trajectory(5, 2000) {
        assert!(p.set_x().contains(&st.x, 0.0));
        assert!(p.set_y().contains(&st.y, 0.0));
        assert!(p.set_y().contains(&st.z, 0.0));
    }
}

#[test]
fn stationary_start_stays_put() {
    let p = QuadraticTestbed::new();
    let init = IterateState::start(&p, vec![0.0], vec![0.0], vec![0.0]).unwrap();
    let sp = ScheduleParams::guideline_defaults(0.1, 0.1, 0.1).unwrap();
    let summary = run(&p, init, &sp, &RunOptions::new(1000), |_, _| Control::Continue).unwrap();
    assert_eq!(summary.stop, StopReason::MaxIter);
    assert_eq!((summary.state.x[0], summary.state.y[0], summary.state.z[0]), (0.0, 0.0, 0.0));
    assert_eq!(summary.state.k, 1001);
}

#[test]
fn synthetic_run_reaches_target_accuracy() {
    let p = SyntheticProblem::new(20).unwrap();
    let (xs, ys) = p.optimum();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x0, y0, z0) = p.sample_initial(&mut rng);
    let init = IterateState::start(&p, x0.clone(), y0.clone(), z0).unwrap();
    let summary = run(&p, init, &reference_schedule(), &RunOptions::new(20_000), |st, _| {
        let e = relative_error(&st.x, &st.y, &xs, &ys, &x0, &y0).unwrap();
        if e < 1e-4 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    assert_eq!(summary.stop, StopReason::TargetReached);
}

#[test]
fn tracking_error_falls_below_threshold_on_quadratic() {
    let p = QuadraticTestbed::new();
    let sp = ScheduleParams::guideline_defaults(0.01, 0.01, 1e-4).unwrap();
    let init = IterateState::start(&p, vec![1.0], vec![0.0], vec![0.0]).unwrap();
    let opts = SaddleOptions::new(1e-12);
    let mut errs = Vec::new();
    run(&p, init, &sp, &RunOptions::new(10_000).with_stride(100), |st, _| {
        let pr = sp.params_at(st.k).unwrap().penalty().unwrap();
        errs.push(tracking_error(&p, pr, st, &opts).unwrap());
        Control::Continue
    })
    .unwrap();
    let best = running_min(&errs);
    assert!(*best.last().unwrap() < 1e-3);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn baseline_with_settled_saddle_matches_single_loop_step() {
    let p = QuadraticTestbed::new();
    let sp = ScheduleParams::guideline_defaults(0.1, 0.05, 0.5).unwrap();
    let step = sp.params_at(1).unwrap();
    let (ys, zs) = QuadraticTestbed::analytic_saddle(1.0, step.rho, step.sigma).unwrap();
    let init = IterateState::start(&p, vec![1.0], vec![ys], vec![zs]).unwrap();

    let single = sipba_step(&p, &init, &sp).unwrap();
    let opts = BaselineOptions::new(1, 1e-6);
    let double = run_double_loop_baseline(&p, init, &sp, &opts, |_, _| Control::Continue).unwrap();
    assert_eq!(double.inner_failures, 0);
    assert_abs_diff_eq!(single.x[0], double.state.x[0], epsilon = 1e-12);
}

#[test]
fn clean_hyper_rep_upper_objective_collapses() {
    let data = HyperRepData::generate(10, 3, 100, 100, 50, 0.0, 4).unwrap();
    let p = HyperRepProblem::new(data);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (x, y, z) = p.sample_initial(&mut rng, 1.0);
    let init = IterateState::start(&p, x, y, z).unwrap();
    let f0 = p.upper(&init.x, &init.y);
    let sp = ScheduleParams::new(1e-3, 1e-3, 10.0, 1e-4, 0.01, 0.01, 0.16).unwrap();
    let summary = run(&p, init, &sp, &RunOptions::new(20_000), |_, _| Control::Continue).unwrap();
    let f = p.upper(&summary.state.x, &summary.state.y);
    assert!(f < 1e-3 * f0, "{f:e} vs initial {f0:e}");
}

#[test]
fn single_precision_run_stays_finite() {
    let p = benchmarks::SyntheticProblem::<f32>::new(10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y, z) = p.sample_initial(&mut rng);
    let init = IterateState::start(&p, x, y, z).unwrap();
    let sp = schedule::ScheduleParams::<f32>::new(0.1, 0.001, 10.0, 0.01, 0.001, 0.001, 0.1).unwrap();
    let summary = run(&p, init, &sp, &RunOptions::new(3000), |_, _| Control::Continue).unwrap();
    assert!(summary.state.is_finite());
    let (xs, _) = p.optimum();
    let err: f32 = summary.state.x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(err < 0.05, "{err}");
}
