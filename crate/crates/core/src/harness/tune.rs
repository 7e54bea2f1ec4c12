use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, MetricKind, Reference};
use super::{load_data, relative_suboptimality, run_algorithm, PointParams, RunContext};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::glm::{GlmProblem, ProblemConstants};
use crate::oracle::Objective;
use crate::record::{OracleLedger, RunRecord, RunSpec};
use crate::seed::SeedPath;

const TUNING_BRANCH: u64 = 1;
const FINAL_BRANCH: u64 = 2;
const CONSTANTS_BRANCH: u64 = 3;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub alg: String,
    pub mu: f64,
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "K")]
    pub steps: usize,
    #[serde(rename = "R")]
    pub rounds: usize,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_internal: Option<f64>,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub reps: usize,
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingResult {
    pub row: ResultRow,
    /// Best metric of every final repetition, in repetition order.
    pub rep_metrics: Vec<f64>,
}

impl SettingResult {
    /// `None` when no stable configuration was found.
    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.rep_metrics.iter().copied().filter(|m| m.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    pub fn is_stable(&self) -> bool {
        self.row.reps > 0
    }
}

/// One line of `trajectories.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub alg: String,
    pub mu: f64,
    #[serde(rename = "M")]
    pub machines: usize,
    #[serde(rename = "K")]
    pub steps: usize,
    #[serde(rename = "R")]
    pub rounds: usize,
    #[serde(flatten)]
    pub point: PointParams,
    pub rep: usize,
    pub seed: u64,
    pub best: f64,
    pub rounds_consumed: usize,
    pub ledger: OracleLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged: Option<String>,
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<SettingResult>,
    pub trajectories: Vec<TrajectoryLine>,
}

impl ResultTable {
    pub fn find(&self, alg: Algorithm, mu: f64, machines: usize, rounds: usize) -> Option<&SettingResult> {
        self.rows.iter().find(|s| {
            s.row.alg == alg.id() && s.row.mu == mu && s.row.machines == machines && s.row.rounds == rounds
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Setting {
    alg: Algorithm,
    mu_index: usize,
    mu: f64,
    machines: usize,
    steps: usize,
    rounds: usize,
}

impl Setting {
    fn seeds(&self, master: u64) -> SeedPath {
        SeedPath::root(master)
            .child(self.alg as u64)
            .child(self.mu.to_bits())
            .child(self.machines as u64)
            .child(self.steps as u64)
            .child(self.rounds as u64)
    }

    fn seed(&self, master: u64, branch: u64, rep: usize) -> u64 {
        self.seeds(master).child(branch).child(rep as u64).digest()
    }
}

type MetricFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

struct MuContext {
    problem: GlmProblem,
    metric: MetricFn,
    constants: Option<ProblemConstants>,
}

fn reference_value(cfg: &ExperimentConfig, problem: &GlmProblem) -> Result<f64> {
    match &cfg.reference {
        Reference::Compute { tol, max_iters } => {
            let sol = problem.newton_reference(None, *tol, *max_iters)?;
            tracing::info!(mu = problem.mu(), fstar = sol.value, iterations = sol.iterations, "reference optimum");
            Ok(sol.value)
        }
        Reference::Values { values } => values
            .iter()
            .find(|v| v.mu == problem.mu())
            .map(|v| v.fstar)
            .ok_or_else(|| Error::Config(format!("no reference value for mu = {}", problem.mu()))),
    }
}

fn mu_context(
    cfg: &ExperimentConfig,
    train: &Arc<Dataset>,
    validation: &Option<Arc<Dataset>>,
    mu: f64,
) -> Result<MuContext> {
    let problem = GlmProblem::new(Arc::clone(train), mu)?;
    let metric: MetricFn = match cfg.metric {
        MetricKind::RelativeSuboptimality => {
            let fstar = reference_value(cfg, &problem)?;
            relative_suboptimality(fstar, fstar)?;
            let p = problem.clone();
            Box::new(move |x: &[f64]| (p.value(x) - fstar) / fstar)
        }
        MetricKind::ValidationLoss => {
            let val = validation
                .as_ref()
                .ok_or_else(|| Error::Config("validation-loss needs data.train_rows".into()))?;
            let vp = GlmProblem::new(Arc::clone(val), 0.0)?;
            Box::new(move |x: &[f64]| vp.value(x))
        }
    };
    let constants = cfg.algorithms.contains(&Algorithm::Fedsn).then(|| {
        let seed = SeedPath::root(cfg.seed).child(CONSTANTS_BRANCH).child(mu.to_bits()).digest();
        problem.estimate_constants(cfg.fedsn.probe_budget, cfg.fedsn.distance, seed)
    });
    Ok(MuContext {
        problem,
        metric,
        constants,
    })
}

fn grid(cfg: &ExperimentConfig, alg: Algorithm) -> Vec<PointParams> {
    let opt = |on: bool, v: &[f64]| -> Vec<Option<f64>> {
        if on {
            v.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    };
    let etas = opt(alg.tunes_eta(), &cfg.eta_grid);
    let betas = opt(alg.tunes_beta(), &cfg.beta_grid);
    let lambdas = opt(alg.tunes_lambda(), &cfg.lambda_internal_grid);
    let mut points = Vec::new();
    for &beta in &betas {
        for &lambda_internal in &lambdas {
            for &eta in &etas {
                points.push(PointParams {
                    eta,
                    beta,
                    lambda_internal,
                });
            }
        }
    }
    points
}

fn canonical_order(a: &Setting, b: &Setting) -> std::cmp::Ordering {
    (a.alg, a.mu_index, a.machines, a.steps, a.rounds)
        .cmp(&(b.alg, b.mu_index, b.machines, b.steps, b.rounds))
        .then(a.mu.total_cmp(&b.mu))
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Index of the grid point with the smallest mean score. A point with any
/// missing score (diverged or failed repetition) is never selected; ties
/// go to the earliest point.
pub fn select_best<S: AsRef<[Option<f64>]>>(scores: &[S]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (p, vals) in scores.iter().enumerate() {
        let vals = vals.as_ref();
        if vals.is_empty() || vals.iter().any(|v| v.is_none_or(|v| !v.is_finite())) {
            continue;
        }
        let mean = vals.iter().map(|v| v.unwrap()).sum::<f64>() / vals.len() as f64;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((p, mean));
        }
    }
    best.map(|(p, _)| p)
}

/// Tunes every (algorithm, μ, M, R) setting over its grid, then reruns the
/// selected point with fresh seeds. Work is spread over `threads` workers;
/// the result does not depend on the thread count.
pub fn tune_and_run(cfg: &ExperimentConfig, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| tune_inner(cfg))
}

fn tune_inner(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let (train, validation) = load_data(&cfg.data)?;
    // sorted μ order so that settings sort by value
    let mut mus = cfg.mu.clone();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    let contexts = mus
        .iter()
        .map(|&mu| mu_context(cfg, &train, &validation, mu))
        .collect::<Result<Vec<_>>>()?;

    let mut settings = Vec::new();
    for &alg in &cfg.algorithms {
        for (mu_index, &mu) in mus.iter().enumerate() {
            for &machines in &cfg.machines {
                for &rounds in &cfg.rounds {
                    settings.push(Setting {
                        alg,
                        mu_index,
                        mu,
                        machines,
                        steps: cfg.steps_for(rounds)?,
                        rounds,
                    });
                }
            }
        }
    }
    settings.sort_by(canonical_order);
    settings.dedup_by(|a, b| canonical_order(a, b).is_eq());
    let grids: Vec<Vec<PointParams>> = settings.iter().map(|s| grid(cfg, s.alg)).collect();

    let run = |s: &Setting, point: &PointParams, seed: u64| -> Result<RunRecord> {
        let ctx = &contexts[s.mu_index];
        let spec = RunSpec {
            machines: s.machines,
            steps: s.steps,
            rounds: s.rounds,
            sampling: cfg.sampling,
            seed,
        };
        let rc = RunContext {
            nu: cfg.nu,
            constants: ctx.constants,
            case: cfg.fedsn.case,
        };
        run_algorithm(s.alg, &ctx.problem, point, &rc, &spec, &*ctx.metric)
    };

    let tuning_jobs: Vec<(usize, usize, usize)> = settings
        .iter()
        .enumerate()
        .filter(|(i, _)| grids[*i].len() > 1)
        .flat_map(|(i, _)| {
            (0..grids[i].len()).flat_map(move |p| (0..cfg.tuning_reps).map(move |rep| (i, p, rep)))
        })
        .collect();
    tracing::info!(settings = settings.len(), jobs = tuning_jobs.len(), "tuning");
    let tuning: Vec<Option<f64>> = tuning_jobs
        .par_iter()
        .map(|&(i, p, rep)| {
            let s = &settings[i];
            match run(s, &grids[i][p], s.seed(cfg.seed, TUNING_BRANCH, rep)) {
                Ok(r) if r.diverged.is_none() && r.best.is_finite() => Some(r.best),
                Ok(_) => None,
                Err(e) => {
                    tracing::debug!(alg = %s.alg, error = %e, "tuning run failed");
                    None
                }
            }
        })
        .collect();

    let mut chosen: Vec<Option<usize>> = grids.iter().map(|g| (g.len() == 1).then_some(0)).collect();
    let mut cursor = 0;
    for (i, g) in grids.iter().enumerate() {
        if g.len() == 1 {
            continue;
        }
        let scores: Vec<&[Option<f64>]> = (0..g.len())
            .map(|p| &tuning[cursor + p * cfg.tuning_reps..cursor + (p + 1) * cfg.tuning_reps])
            .collect();
        cursor += g.len() * cfg.tuning_reps;
        let best = select_best(&scores);
        chosen[i] = best;
        if best.is_none() {
            tracing::warn!(alg = %settings[i].alg, mu = settings[i].mu, M = settings[i].machines,
                R = settings[i].rounds, "no stable configuration");
        }
    }

    let final_jobs: Vec<(usize, usize)> = chosen
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_some())
        .flat_map(|(i, _)| (0..cfg.final_reps).map(move |rep| (i, rep)))
        .collect();
    tracing::info!(jobs = final_jobs.len(), "final repetitions");
    let finals: Vec<(u64, Result<RunRecord>)> = final_jobs
        .par_iter()
        .map(|&(i, rep)| {
            let s = &settings[i];
            let seed = s.seed(cfg.seed, FINAL_BRANCH, rep);
            (seed, run(s, &grids[i][chosen[i].unwrap()], seed))
        })
        .collect();

    let mut table = ResultTable::default();
    let mut finals = final_jobs.iter().zip(finals).peekable();
    for (i, s) in settings.iter().enumerate() {
        let point = chosen[i].map(|p| grids[i][p]).unwrap_or_default();
        let mut metrics = Vec::new();
        let mut calls = 0u64;
        while let Some(((_, rep), (seed, res))) = finals.next_if(|((j, _), _)| *j == i) {
            match res {
                Ok(r) => {
                    metrics.push(r.best);
                    calls += r.ledger.calls();
                    table.trajectories.push(TrajectoryLine {
                        alg: s.alg.id().to_string(),
                        mu: s.mu,
                        machines: s.machines,
                        steps: s.steps,
                        rounds: s.rounds,
                        point,
                        rep: *rep,
                        seed,
                        best: r.best,
                        rounds_consumed: r.rounds,
                        ledger: r.ledger,
                        diverged: r.diverged,
                        trajectory: r.trajectory,
                    });
                }
                Err(e) => tracing::warn!(alg = %s.alg, rep, error = %e, "final run failed"),
            }
        }
        let (mean, std) = if metrics.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mean = metrics.iter().sum::<f64>() / metrics.len() as f64;
            (mean, sample_std(&metrics, mean))
        };
        table.rows.push(SettingResult {
            row: ResultRow {
                alg: s.alg.id().to_string(),
                mu: s.mu,
                machines: s.machines,
                steps: s.steps,
                rounds: s.rounds,
                eta: point.eta,
                beta: point.beta,
                lambda_internal: point.lambda_internal,
                metric_mean: mean,
                metric_std: std,
                reps: metrics.len(),
                oracle_calls: calls,
            },
            rep_metrics: metrics,
        });
    }
    Ok(table)
}
