use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dataio::{ParseOptions, SamplingMode};
use crate::error::{Error, Result};
use crate::quadcore::OracleCase;

pub const DEFAULT_ETA_GRID: [f64; 17] = [
    0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0,
];
pub const DEFAULT_BETA_GRID: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fedsn,
    FedsnLite,
    Fedac1,
    Fedac2,
    LocalSgd,
    MinibatchSgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fedsn,
        Algorithm::FedsnLite,
        Algorithm::Fedac1,
        Algorithm::Fedac2,
        Algorithm::LocalSgd,
        Algorithm::MinibatchSgd,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Fedsn => "fedsn",
            Algorithm::FedsnLite => "fedsn-lite",
            Algorithm::Fedac1 => "fedac1",
            Algorithm::Fedac2 => "fedac2",
            Algorithm::LocalSgd => "local-sgd",
            Algorithm::MinibatchSgd => "minibatch-sgd",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }

    pub fn tunes_eta(self) -> bool {
        self != Algorithm::Fedsn
    }

    pub fn tunes_beta(self) -> bool {
        matches!(self, Algorithm::FedsnLite | Algorithm::LocalSgd | Algorithm::MinibatchSgd)
    }

    pub fn tunes_lambda(self) -> bool {
        matches!(self, Algorithm::Fedac1 | Algorithm::Fedac2)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Planted-model logistic data generated in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub count: usize,
    pub dim: usize,
    #[serde(default = "one")]
    pub feature_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// LIBSVM file (optionally `.gz`); relative paths resolve against the
    /// config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticData>,
    #[serde(default)]
    pub parse: ParseOptions,
    /// Train on the first `train_rows` rows; the rest form the validation set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_rows: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValue {
    pub mu: f64,
    pub fstar: f64,
}

/// Where the optimal values `F*` come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reference {
    /// Exact Newton on the training objective.
    Compute {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_newton_iters")]
        max_iters: usize,
    },
    /// Known values per `mu`.
    Values { values: Vec<ReferenceValue> },
}

fn default_tol() -> f64 {
    1e-10
}

fn default_newton_iters() -> usize {
    100
}

impl Default for Reference {
    fn default() -> Self {
        Reference::Compute {
            tol: default_tol(),
            max_iters: default_newton_iters(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// `(F(x) - F*) / F*` on the training objective.
    #[default]
    RelativeSuboptimality,
    /// Unregularized mean logistic loss on the held-out rows.
    ValidationLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FedsnOptions {
    /// Distance bound `B`.
    #[serde(default = "default_distance")]
    pub distance: f64,
    /// Stochastic gradients used to estimate `σ`.
    #[serde(default = "default_probe")]
    pub probe_budget: usize,
    #[serde(default = "default_case")]
    pub case: OracleCase,
}

fn default_distance() -> f64 {
    10.0
}

fn default_probe() -> usize {
    1000
}

fn default_case() -> OracleCase {
    OracleCase::DifferentSamples
}

impl Default for FedsnOptions {
    fn default() -> Self {
        FedsnOptions {
            distance: default_distance(),
            probe_budget: default_probe(),
            case: default_case(),
        }
    }
}

/// One experiment: every algorithm is tuned and rerun for every
/// combination of `mu`, `machines` and `rounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub data: DataConfig,
    pub mu: Vec<f64>,
    pub machines: Vec<usize>,
    pub rounds: Vec<usize>,
    /// Fixed parallel runtime `KR`; `K = kr / R` for every `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kr: Option<usize>,
    /// Fixed `K`, used when `kr` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_internal_grid: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default = "default_reps")]
    pub tuning_reps: usize,
    #[serde(default = "default_reps")]
    pub final_reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub metric: MetricKind,
    #[serde(default)]
    pub fedsn: FedsnOptions,
}

fn default_eta_grid() -> Vec<f64> {
    DEFAULT_ETA_GRID.to_vec()
}

fn default_beta_grid() -> Vec<f64> {
    DEFAULT_BETA_GRID.to_vec()
}

fn default_lambda_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

fn default_nu() -> f64 {
    crate::fedsnlite::DEFAULT_NU
}

fn default_reps() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving a relative data path against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(p), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn schema() -> serde_json::Value {
        serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
    }

    /// `K` for a given `R`.
    pub fn steps_for(&self, rounds: usize) -> Result<usize> {
        match (self.kr, self.k) {
            (Some(kr), _) => {
                if rounds == 0 || kr % rounds != 0 {
                    return Err(Error::Config(format!("R = {rounds} does not divide KR = {kr}")));
                }
                Ok(kr / rounds)
            }
            (None, Some(k)) => Ok(k),
            (None, None) => Err(Error::Config("one of `kr` or `k` is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.algorithms.is_empty() {
            return fail("no algorithms");
        }
        if self.mu.is_empty() || self.machines.is_empty() || self.rounds.is_empty() {
            return fail("mu, machines and rounds must be nonempty");
        }
        if self.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return fail("mu values must be finite and ≥ 0");
        }
        if self.machines.contains(&0) {
            return fail("machine counts must be ≥ 1");
        }
        for &r in &self.rounds {
            if self.steps_for(r)? == 0 {
                return fail("K must be ≥ 1");
            }
        }
        if self.tuning_reps == 0 || self.final_reps == 0 {
            return fail("tuning_reps and final_reps must be ≥ 1");
        }
        let tunes = |f: fn(Algorithm) -> bool| self.algorithms.iter().any(|a| f(*a));
        if tunes(Algorithm::tunes_eta) && (self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(*e > 0.0))) {
            return fail("eta_grid must be nonempty and positive");
        }
        if tunes(Algorithm::tunes_beta) && self.beta_grid.is_empty() {
            return fail("beta_grid must be nonempty");
        }
        if tunes(Algorithm::tunes_lambda)
            && (self.lambda_internal_grid.is_empty() || self.lambda_internal_grid.iter().any(|l| !(*l >= 0.0)))
        {
            return fail("lambda_internal_grid must be nonempty and ≥ 0");
        }
        if !(self.nu > 0.0) {
            return fail("nu must be positive");
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return fail("exactly one of data.path and data.synthetic is required"),
        }
        if self.metric == MetricKind::ValidationLoss && self.data.train_rows.is_none() {
            return fail("validation-loss needs data.train_rows");
        }
        Ok(())
    }
}
