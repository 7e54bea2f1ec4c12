mod common;

use common::*;
use fedsn_core::fedsnlite::damping;
use fedsn_core::linalg;
use fedsn_core::{fedsn_lite, FullBatch, LiteConfig, Objective, Quadratic, RunSpec, SamplingMode};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn quadratic() -> Quadratic {
    Quadratic::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]), vec![1.0, -2.0])
}

#[test]
fn zero_step_leaves_the_iterate_alone() {
    let q = FullBatch(Quadratic::new(DMatrix::identity(2, 2), vec![0.0, 0.0]));
    let metric = |x: &[f64]| q.value(x);
    let rec = fedsn_lite(&q, &[0.0, 0.0], &LiteConfig::new(0.1, 0.5), &RunSpec::new(3, 10, 4, 1), &metric).unwrap();
    assert_eq!(rec.final_point, vec![0.0, 0.0]);
    assert_eq!(rec.trajectory, vec![0.0; 5]);
}

#[test]
fn one_outer_step_on_a_quadratic_is_a_damped_newton_step() {
    let q = quadratic();
    let fb = FullBatch(q.clone());
    let xstar = q.minimizer();
    let x0 = vec![0.0, 0.0];
    let newton = linalg::sub(&xstar, &x0);
    let an = q.matrix() * nalgebra::DVector::from_column_slice(&newton);
    let s = linalg::dot(&newton, an.as_slice());
    let fstar = q.value(&xstar);
    let metric = |x: &[f64]| q.value(x);
    for nu in [1.0, 1.25, 1.0 + s.sqrt()] {
        let cfg = LiteConfig { nu, beta: 0.0, eta: 0.4 };
        let rec = fedsn_lite(&fb, &x0, &cfg, &RunSpec::new(2, 20_000, 1, 3), &metric).unwrap();
        let c = damping(nu, s);
        let want: Vec<f64> = x0.iter().zip(&newton).map(|(x, n)| x + c * n).collect();
        assert!(linalg::dist(&rec.final_point, &want) <= 1e-3 * linalg::norm(&newton));
        let gap = (1.0 - c).powi(2) * (q.value(&x0) - fstar);
        assert!((rec.last() - fstar - gap).abs() <= 1e-3 * (q.value(&x0) - fstar));
    }
    // ν = 1 + √s gives ν_t = 1, so the step lands on the minimizer
    let cfg = LiteConfig { nu: 1.0 + s.sqrt(), beta: 0.0, eta: 0.4 };
    let rec = fedsn_lite(&fb, &x0, &cfg, &RunSpec::new(2, 20_000, 1, 3), &metric).unwrap();
    assert!(rec.last() - fstar <= 1e-6);
}

#[test]
fn fixed_kr_budget_gives_one_round_per_outer_step() {
    let p = synthetic_problem(500, 5, 1e-3, 61);
    let metric = |x: &[f64]| p.value(x);
    for sampling in [SamplingMode::WithReplacement, SamplingMode::SinglePass] {
        let spec = RunSpec::new(4, 10, 100 / 10, 2).with_sampling(sampling);
        let rec = fedsn_lite(&p, &[0.0; 5], &LiteConfig::new(0.5, 0.3), &spec, &metric).unwrap();
        assert_eq!(rec.rounds, 10);
        assert_eq!(rec.trajectory.len(), 11);
        assert_eq!(rec.ledger.quad_access, 4 * 10 * 10);
        assert_eq!(rec.ledger.decrement, 10);
        assert_eq!(rec.ledger.gradient, 0);
        assert_eq!(rec.ledger.draws, 4 * 10 * 10 + 10);
    }
}

#[test]
fn divergence_is_recorded_not_raised() {
    let p = synthetic_problem(200, 5, 0.0, 62);
    let metric = |x: &[f64]| p.value(x);
    let rec = fedsn_lite(&p, &[0.0; 5], &LiteConfig::new(1e4, 0.9), &RunSpec::new(2, 50, 5, 2), &metric).unwrap();
    assert!(rec.diverged.is_some());
    assert!(rec.rounds < 5);
}

#[test]
fn invalid_configs_are_rejected() {
    let p = synthetic_problem(20, 2, 0.0, 63);
    let metric = |x: &[f64]| p.value(x);
    let spec = RunSpec::new(1, 5, 1, 0);
    for cfg in [LiteConfig::new(0.0, 0.0), LiteConfig { nu: 0.0, ..LiteConfig::new(0.1, 0.0) }] {
        assert!(fedsn_lite(&p, &[0.0; 2], &cfg, &spec, &metric).is_err());
    }
}

#[test]
fn result_is_independent_of_thread_count() {
    let p = synthetic_problem(300, 6, 1e-3, 64);
    let metric = |x: &[f64]| p.value(x);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fedsn_lite(&p, &[0.0; 6], &LiteConfig::new(0.5, 0.7), &RunSpec::new(8, 20, 6, 5), &metric))
            .unwrap()
    };
    assert_eq!(bits(&run(1).trajectory), bits(&run(8).trajectory));
}

proptest! {
    #[test]
    fn damping_stays_in_range(nu in 1e-6..100.0f64, s in -10.0..1e12f64) {
        let v = damping(nu, s);
        prop_assert!(v > 0.0 && v <= nu);
    }
}
