//! FedSN-Lite: an unregularized one-shot quadratic solve per round, damped
//! by a stochastic estimate of the Newton decrement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::Oracle;
use crate::quadcore::{regularized_quadratic_solver, OracleCase, QuadSubproblem, Schedule};
use crate::record::{Metric, RunRecord, RunSpec};

pub const DEFAULT_NU: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteConfig {
    /// Newton stepsize scale `ν`.
    pub nu: f64,
    /// Inner heavy-ball momentum.
    pub beta: f64,
    /// Inner constant stepsize.
    pub eta: f64,
}

impl LiteConfig {
    pub fn new(eta: f64, beta: f64) -> Self {
        LiteConfig {
            nu: DEFAULT_NU,
            beta,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !(self.eta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "FedSN-Lite needs ν > 0 and η > 0 (got ν = {}, η = {}, β = {})",
                self.nu, self.eta, self.beta
            )));
        }
        Ok(())
    }
}

/// `ν / (1 + √max(s, 0))`
pub fn damping(nu: f64, s: f64) -> f64 {
    nu / (1.0 + s.max(0.0).sqrt())
}

/// `R` outer steps, one communication round each. The decrement sample is
/// drawn from a coordinator stream separate from the machines.
pub fn fedsn_lite<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    cfg: &LiteConfig,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    cfg.validate()?;
    spec.validate()?;
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    let schedule = Schedule::constant(cfg.eta, spec.steps)?;
    let mut streams = spec.samplers(oracle.population(), 1);
    let mut coordinator = streams.pop().expect("fleet includes the coordinator stream");
    let mut x = x0.to_vec();
    let mut record = RunRecord::start(spec.seed, metric(&x), &x);
    for _ in 0..spec.rounds {
        let sub = QuadSubproblem::new(oracle, &x, 1.0, 0.0, OracleCase::SameSample)?;
        let solve = match regularized_quadratic_solver(&sub, &schedule, cfg.beta, &mut streams) {
            Ok(s) => s,
            Err(e) => return record.absorb_divergence(e),
        };
        record.ledger.absorb(solve.ledger);
        let z = coordinator.draw()?;
        let s = oracle.sample_curvature(&x, &solve.u, z);
        record.ledger.decrement += 1;
        record.ledger.draws += 1;
        linalg::axpy(damping(cfg.nu, s), &solve.u, &mut x);
        record.push_round(metric(&x));
        record.final_point.clone_from(&x);
    }
    Ok(record)
}
