use serde::{Deserialize, Serialize};

use crate::dataio::{Sampler, SamplingMode};
use crate::error::{Error, Result};
use crate::seed::SeedPath;

/// Evaluates the reported metric at an iterate.
pub type Metric<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Machines `M`, local steps `K`, rounds `R`, sampling mode and seed of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub machines: usize,
    pub steps: usize,
    pub rounds: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
}

impl RunSpec {
    pub fn new(machines: usize, steps: usize, rounds: usize, seed: u64) -> Self {
        RunSpec {
            machines,
            steps,
            rounds,
            sampling: SamplingMode::WithReplacement,
            seed,
        }
    }

    pub fn with_sampling(mut self, sampling: SamplingMode) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 || self.steps == 0 || self.rounds == 0 {
            return Err(Error::InvalidParameter(format!(
                "M, K and R must be ≥ 1 (got M = {}, K = {}, R = {})",
                self.machines, self.steps, self.rounds
            )));
        }
        Ok(())
    }

    /// One sampler per machine followed by `extra` coordinator streams.
    pub fn samplers(&self, population: usize, extra: usize) -> Vec<Sampler> {
        Sampler::fleet(
            self.sampling,
            population,
            SeedPath::root(self.seed).child(0x5a_4d),
            self.machines + extra,
        )
    }
}

/// Oracle calls consumed by one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLedger {
    /// First-order calls `g(x; z)` made directly by an algorithm.
    pub gradient: u64,
    /// Quadratic-subproblem gradient accesses (one `g` plus one `h` each).
    pub quad_access: u64,
    /// Extra HVP calls for the stochastic Newton decrement.
    pub decrement: u64,
    /// Indices drawn from the sampling streams.
    pub draws: u64,
}

impl OracleLedger {
    pub fn calls(&self) -> u64 {
        self.gradient + self.quad_access + self.decrement
    }

    pub fn absorb(&mut self, other: OracleLedger) {
        self.gradient += other.gradient;
        self.quad_access += other.quad_access;
        self.decrement += other.decrement;
        self.draws += other.draws;
    }
}

/// Metric trajectory of one algorithm run under one seed.
///
/// `trajectory[0]` is the metric at the starting point and one entry is
/// appended per communication round, so `trajectory.len() == rounds + 1`
/// for a run that completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub trajectory: Vec<f64>,
    pub best: f64,
    pub rounds: usize,
    pub ledger: OracleLedger,
    /// Set when the run was aborted by the divergence guard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged: Option<String>,
    pub final_point: Vec<f64>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl RunRecord {
    pub(crate) fn start(seed: u64, initial_metric: f64, x0: &[f64]) -> Self {
        RunRecord {
            seed,
            trajectory: vec![initial_metric],
            best: initial_metric,
            rounds: 0,
            ledger: OracleLedger::default(),
            diverged: None,
            final_point: x0.to_vec(),
            wall_seconds: 0.0,
        }
    }

    pub(crate) fn push_round(&mut self, metric: f64) {
        self.trajectory.push(metric);
        self.rounds += 1;
        // NaN never becomes the best value
        if metric < self.best {
            self.best = metric;
        }
    }

    /// Records a divergence abort; other errors are passed back.
    pub(crate) fn absorb_divergence(mut self, err: Error) -> Result<Self> {
        match err {
            Error::Diverged { .. } => {
                tracing::debug!(seed = self.seed, %err, "run diverged");
                self.diverged = Some(err.to_string());
                Ok(self)
            }
            other => Err(other),
        }
    }

    pub fn last(&self) -> f64 {
        *self.trajectory.last().expect("trajectory holds the initial point")
    }
}
