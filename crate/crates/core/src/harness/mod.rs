//! Experiment orchestration: configuration, grid search with repetitions,
//! metric computation and result emission.

mod config;
mod emit;
mod tune;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{
    Algorithm, DataConfig, ExperimentConfig, FedsnOptions, MetricKind, Reference, ReferenceValue, SyntheticData,
    DEFAULT_BETA_GRID, DEFAULT_ETA_GRID, DEFAULT_LAMBDA_GRID,
};
pub use emit::{emit, read_results_csv, ExperimentMeta, CSV_HEADER};
pub use tune::{select_best, tune_and_run, ResultRow, ResultTable, SettingResult, TrajectoryLine};

use crate::baselines::{fedac, fedac_params, local_sgd, minibatch_sgd, FedAcVariant};
use crate::dataio::{read_libsvm, synthetic_logistic, Dataset};
use crate::error::{Error, Result};
use crate::fedsn::{derive_hyperparams, fedsn};
use crate::fedsnlite::{fedsn_lite, LiteConfig};
use crate::glm::{GlmProblem, ProblemConstants};
use crate::quadcore::OracleCase;
use crate::record::{Metric, RunRecord, RunSpec};

/// `(F - F*) / F*`
pub fn relative_suboptimality(f: f64, f_star: f64) -> Result<f64> {
    if !(f_star > 0.0) {
        return Err(Error::InvalidParameter(format!("reference value {f_star} must be positive")));
    }
    Ok((f - f_star) / f_star)
}

/// Tunable hyperparameters of one grid point; `None` where an algorithm has
/// no such parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointParams {
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_internal: Option<f64>,
}

/// Everything besides the grid point that a single run needs.
#[derive(Debug, Clone, Copy)]
pub struct RunContext {
    pub nu: f64,
    /// Needed by FedSN only.
    pub constants: Option<ProblemConstants>,
    pub case: OracleCase,
}

impl Default for RunContext {
    fn default() -> Self {
        RunContext {
            nu: crate::fedsnlite::DEFAULT_NU,
            constants: None,
            case: OracleCase::DifferentSamples,
        }
    }
}

fn need(v: Option<f64>, name: &str, alg: Algorithm) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidParameter(format!("{alg} needs {name}")))
}

/// Runs one algorithm from the origin.
pub fn run_algorithm(
    alg: Algorithm,
    problem: &GlmProblem,
    point: &PointParams,
    ctx: &RunContext,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    let x0 = vec![0.0; problem.dataset().dim()];
    let started = std::time::Instant::now();
    let mut record = match alg {
        Algorithm::Fedsn => {
            let constants = ctx
                .constants
                .ok_or_else(|| Error::InvalidParameter("fedsn needs problem constants".into()))?;
            let mut hyper = derive_hyperparams(spec.machines, spec.steps, spec.rounds, &constants)?;
            hyper.case = ctx.case;
            fedsn(problem, &x0, &hyper, spec, metric)?
        }
        Algorithm::FedsnLite => {
            let cfg = LiteConfig {
                nu: ctx.nu,
                beta: point.beta.unwrap_or(0.0),
                eta: need(point.eta, "eta", alg)?,
            };
            fedsn_lite(problem, &x0, &cfg, spec, metric)?
        }
        Algorithm::Fedac1 | Algorithm::Fedac2 => {
            let variant = if alg == Algorithm::Fedac1 { FedAcVariant::I } else { FedAcVariant::II };
            let internal = point.lambda_internal.unwrap_or(0.0);
            let params = fedac_params(variant, need(point.eta, "eta", alg)?, problem.mu() + internal, spec.steps)?
                .with_internal_regularization(internal);
            fedac(problem, &x0, &params, spec, metric)?
        }
        Algorithm::LocalSgd => local_sgd(problem, &x0, need(point.eta, "eta", alg)?, point.beta.unwrap_or(0.0), spec, metric)?,
        Algorithm::MinibatchSgd => {
            minibatch_sgd(problem, &x0, need(point.eta, "eta", alg)?, point.beta.unwrap_or(0.0), spec, metric)?
        }
    };
    record.wall_seconds = started.elapsed().as_secs_f64();
    Ok(record)
}

/// Training rows and, when a split is configured, validation rows.
pub fn load_data(cfg: &DataConfig) -> Result<(Arc<Dataset>, Option<Arc<Dataset>>)> {
    let full = match (&cfg.path, &cfg.synthetic) {
        (Some(path), None) => read_libsvm(path, &cfg.parse)?,
        (None, Some(s)) => synthetic_logistic(s.count, s.dim, s.feature_scale, s.seed),
        _ => return Err(Error::Config("exactly one of data.path and data.synthetic is required".into())),
    };
    match cfg.train_rows {
        None => Ok((Arc::new(full), None)),
        Some(n) => {
            let (train, val) = full.split_at(n)?;
            Ok((Arc::new(train), Some(Arc::new(val))))
        }
    }
}
