mod common;

use std::collections::HashSet;
use std::sync::Arc;

use common::*;
use fedsn_core::harness::{
    emit, read_results_csv, relative_suboptimality, run_algorithm, select_best, Algorithm, DataConfig,
    ExperimentConfig, MetricKind, PointParams, Reference, ReferenceValue, ResultTable, RunContext, SyntheticData,
    CSV_HEADER, DEFAULT_ETA_GRID,
};
use fedsn_core::{local_sgd, tune_and_run, FullBatch, GlmProblem, Objective, Quadratic, RunSpec, SamplingMode, SeedPath};
use nalgebra::DMatrix;

fn config(algorithms: Vec<Algorithm>) -> ExperimentConfig {
    ExperimentConfig {
        algorithms,
        data: DataConfig {
            synthetic: Some(SyntheticData {
                count: 400,
                dim: 6,
                feature_scale: 1.0,
                seed: 3,
            }),
            ..Default::default()
        },
        mu: vec![1e-2],
        machines: vec![2],
        rounds: vec![5],
        kr: None,
        k: Some(4),
        eta_grid: vec![0.05, 0.5, 2.0],
        beta_grid: vec![0.0, 0.5],
        lambda_internal_grid: vec![1e-3],
        nu: 1.25,
        sampling: SamplingMode::WithReplacement,
        tuning_reps: 3,
        final_reps: 4,
        seed: 17,
        reference: Reference::default(),
        metric: MetricKind::RelativeSuboptimality,
        fedsn: Default::default(),
    }
}

fn problem_of(cfg: &ExperimentConfig, mu: f64) -> GlmProblem {
    let (train, _) = fedsn_core::harness::load_data(&cfg.data).unwrap();
    GlmProblem::new(Arc::clone(&train), mu).unwrap()
}

#[test]
fn relative_suboptimality_examples() {
    assert_eq!(relative_suboptimality(0.4, 0.4).unwrap(), 0.0);
    assert_eq!(relative_suboptimality(0.8, 0.4).unwrap(), 1.0);
    assert!(relative_suboptimality(1.0, 0.0).is_err());
}

#[test]
fn selection_picks_the_grid_point_nearest_the_analytic_optimum() {
    // one exact step on F(x) = a x²/2 + c x: F after the step is convex in η
    // with minimizer η* = 1/a
    for a in [3.0, 0.7, 40.0] {
        let q = FullBatch(Quadratic::new(DMatrix::from_element(1, 1, a), vec![1.0]));
        let metric = |x: &[f64]| q.value(x);
        let scores: Vec<Vec<Option<f64>>> = DEFAULT_ETA_GRID
            .iter()
            .map(|&eta| {
                let rec = local_sgd(&q, &[2.0], eta, 0.0, &RunSpec::new(1, 1, 1, 0), &metric).unwrap();
                vec![Some(rec.last())]
            })
            .collect();
        let loss = |eta: f64| {
            let x = 2.0 - eta * (a * 2.0 + 1.0);
            0.5 * a * x * x + x
        };
        let best = (0..DEFAULT_ETA_GRID.len())
            .min_by(|&i, &j| loss(DEFAULT_ETA_GRID[i]).total_cmp(&loss(DEFAULT_ETA_GRID[j])))
            .unwrap();
        assert_eq!(select_best(&scores), Some(best), "a = {a}");
    }
}

#[test]
fn selection_skips_unstable_points_and_breaks_ties_early() {
    let scores = vec![
        vec![Some(0.5), None],
        vec![Some(0.3), Some(0.3)],
        vec![Some(0.1), Some(f64::NAN)],
        vec![Some(0.2), Some(0.4)],
    ];
    assert_eq!(select_best(&scores), Some(1));
    assert_eq!(select_best(&[vec![None::<f64>]]), None);
    assert_eq!(select_best::<Vec<Option<f64>>>(&[]), None);
}

#[test]
fn single_point_grid_reports_its_final_repetitions() {
    let mut cfg = config(vec![Algorithm::LocalSgd]);
    cfg.eta_grid = vec![0.5];
    cfg.beta_grid = vec![0.3];
    let table = tune_and_run(&cfg, 2).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!((row.row.eta, row.row.beta, row.row.reps), (Some(0.5), Some(0.3), 4));
    let p = problem_of(&cfg, 1e-2);
    let fstar = p.newton_reference(None, 1e-10, 100).unwrap().value;
    let metric = |x: &[f64]| (p.value(x) - fstar) / fstar;
    for (line, &m) in table.trajectories.iter().zip(&row.rep_metrics) {
        let spec = RunSpec::new(2, 4, 5, line.seed);
        let point = PointParams {
            eta: Some(0.5),
            beta: Some(0.3),
            lambda_internal: None,
        };
        let rec = run_algorithm(Algorithm::LocalSgd, &p, &point, &RunContext::default(), &spec, &metric).unwrap();
        assert_eq!(rec.best.to_bits(), m.to_bits());
        assert_eq!(bits(&rec.trajectory), bits(&line.trajectory));
    }
}

#[test]
fn experiment_two_shape_has_one_row_per_setting() {
    let mut cfg = config(vec![Algorithm::FedsnLite, Algorithm::MinibatchSgd, Algorithm::LocalSgd]);
    cfg.mu = vec![1e-2, 1e-4];
    cfg.machines = vec![3, 2];
    cfg.rounds = vec![1, 2, 4];
    cfg.k = None;
    cfg.kr = Some(8);
    cfg.tuning_reps = 1;
    cfg.final_reps = 2;
    let table = tune_and_run(&cfg, 4).unwrap();
    assert_eq!(table.rows.len(), 3 * 2 * 2 * 3);
    let keys: HashSet<(String, u64, usize, usize)> = table
        .rows
        .iter()
        .map(|s| (s.row.alg.clone(), s.row.mu.to_bits(), s.row.machines, s.row.rounds))
        .collect();
    assert_eq!(keys.len(), table.rows.len());
    for s in &table.rows {
        assert_eq!(s.row.steps * s.row.rounds, 8);
        assert!(s.is_stable());
        // ledger conservation: MKR per run plus one decrement per Lite round
        let per_run = (s.row.machines * 8) as u64 + if s.row.alg == "fedsn-lite" { s.row.rounds as u64 } else { 0 };
        assert_eq!(s.row.oracle_calls, per_run * s.row.reps as u64);
    }
    // canonical order: algorithm, μ ascending, M, then K ascending
    let order: Vec<_> = table.rows.iter().map(|s| (s.row.alg.clone(), s.row.mu, s.row.machines, s.row.steps)).collect();
    assert_eq!(order[0], ("fedsn-lite".to_string(), 1e-4, 2, 2));
    assert_eq!(order[1], ("fedsn-lite".to_string(), 1e-4, 2, 4));
    assert_eq!(order[3], ("fedsn-lite".to_string(), 1e-4, 3, 2));
}

#[test]
fn unstable_settings_get_an_explicit_row() {
    let mut cfg = config(vec![Algorithm::LocalSgd]);
    cfg.mu = vec![1.0];
    cfg.eta_grid = vec![1e7, 1e8];
    cfg.beta_grid = vec![0.9];
    cfg.rounds = vec![30];
    let table = tune_and_run(&cfg, 2).unwrap();
    let row = &table.rows[0];
    assert!(!row.is_stable());
    assert_eq!(row.row.reps, 0);
    assert!(row.row.metric_mean.is_nan());
    assert_eq!(row.median(), None);
    assert!(table.trajectories.is_empty());
}

#[test]
fn emitted_csv_round_trips() {
    let cfg = config(vec![Algorithm::Fedac1, Algorithm::LocalSgd, Algorithm::MinibatchSgd]);
    let table = tune_and_run(&cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = emit(&table, &cfg, dir.path(), 3, 1.5).unwrap();
    assert_eq!((meta.rows, meta.runs), (3, 12));
    assert_eq!(meta.config_sha256.len(), 64);
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), table.rows.len() + 1);
    let rows = read_results_csv(dir.path().join("results.csv")).unwrap();
    let want: Vec<_> = table.rows.iter().map(|s| s.row.clone()).collect();
    assert_eq!(rows, want);
    let jsonl = std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 12);
    assert!(!text.contains("wall") && !jsonl.contains("wall_seconds"));
}

#[test]
fn emit_rejects_empty_results_and_unwritable_paths() {
    let cfg = config(vec![Algorithm::LocalSgd]);
    let dir = tempfile::tempdir().unwrap();
    assert!(emit(&ResultTable::default(), &cfg, dir.path(), 1, 0.0).is_err());
    let mut table = tune_and_run(&cfg, 1).unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert!(emit(&table, &cfg, blocker.join("out"), 1, 0.0).is_err());
    table.trajectories[0].trajectory.clear();
    assert!(emit(&table, &cfg, dir.path().join("out"), 1, 0.0).is_err());
}

#[test]
fn final_seeds_never_reuse_tuning_seeds() {
    let cfg = config(vec![Algorithm::LocalSgd, Algorithm::FedsnLite]);
    let table = tune_and_run(&cfg, 2).unwrap();
    let mut tuning = HashSet::new();
    for alg in [Algorithm::LocalSgd, Algorithm::FedsnLite] {
        let base = SeedPath::root(cfg.seed).child(alg as u64).child(1e-2f64.to_bits()).child(2).child(4).child(5);
        for rep in 0..cfg.tuning_reps {
            tuning.insert(base.child(1).child(rep as u64).digest());
        }
    }
    let finals: HashSet<u64> = table.trajectories.iter().map(|t| t.seed).collect();
    assert_eq!(finals.len(), table.trajectories.len());
    assert!(finals.is_disjoint(&tuning));
}

#[test]
fn reference_values_and_validation_loss() {
    let mut cfg = config(vec![Algorithm::MinibatchSgd]);
    cfg.reference = Reference::Values {
        values: vec![ReferenceValue { mu: 1e-2, fstar: 0.25 }],
    };
    let table = tune_and_run(&cfg, 1).unwrap();
    assert!(table.rows[0].is_stable());
    cfg.mu = vec![1e-3];
    assert!(tune_and_run(&cfg, 1).is_err());

    let mut cfg = config(vec![Algorithm::MinibatchSgd]);
    cfg.metric = MetricKind::ValidationLoss;
    assert!(cfg.validate().is_err());
    cfg.data.train_rows = Some(300);
    let table = tune_and_run(&cfg, 1).unwrap();
    assert!(table.rows[0].row.metric_mean > 0.0);
}

#[test]
fn config_json_is_strict_and_has_a_schema() {
    let cfg = config(vec![Algorithm::Fedsn, Algorithm::Fedac2]);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["unknown_field"] = serde_json::json!(1);
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    let minimal = r#"{"algorithms":["local-sgd"],"data":{"synthetic":{"count":10,"dim":2,"seed":1}},
        "mu":[0.001],"machines":[2],"rounds":[5],"kr":100,"seed":1}"#;
    let cfg = ExperimentConfig::from_json(minimal).unwrap();
    assert_eq!(cfg.eta_grid, DEFAULT_ETA_GRID);
    assert_eq!((cfg.tuning_reps, cfg.final_reps), (20, 20));
    assert_eq!(cfg.steps_for(5).unwrap(), 20);
    assert!(cfg.steps_for(3).is_err());
    let schema = ExperimentConfig::schema();
    assert!(schema["properties"]["eta_grid"].is_object());
}
