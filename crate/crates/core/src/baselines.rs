//! First-order baselines: FedAc (two hyperparameter maps), Local SGD and
//! Minibatch SGD, the latter two with heavy-ball momentum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Sampler;
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::Oracle;
use crate::quadcore::DIVERGENCE_NORM;
use crate::record::{Metric, OracleLedger, RunRecord, RunSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub enum FedAcVariant {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedAcParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Internal ridge added to every oracle answer.
    pub lambda: f64,
}

impl FedAcParams {
    pub fn with_internal_regularization(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.eta, self.gamma, self.lambda]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha == 0.0 || self.beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "FedAc needs finite parameters with α ≠ 0 and β ≠ 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Closed-form `(α, β, γ)` for a strong-convexity estimate `λ > 0`.
pub fn fedac_params(variant: FedAcVariant, eta: f64, strong_convexity: f64, steps: usize) -> Result<FedAcParams> {
    let lambda = strong_convexity;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "FedAc hyperparameter maps need a strong-convexity estimate λ > 0 (got {lambda}); \
             supply (α, β, γ) explicitly instead"
        )));
    }
    if !(eta > 0.0) || steps == 0 {
        return Err(Error::InvalidParameter(format!("FedAc needs η > 0 and K ≥ 1 (got η = {eta}, K = {steps})")));
    }
    let gamma = (eta / (lambda * steps as f64)).sqrt().max(eta);
    let (alpha, beta) = match variant {
        FedAcVariant::I => {
            let alpha = 1.0 / (gamma * lambda);
            (alpha, alpha + 1.0)
        }
        FedAcVariant::II => {
            let alpha = 1.5 / (gamma * lambda) - 0.5;
            (alpha, (2.0 * alpha * alpha - 1.0) / (alpha - 1.0))
        }
    };
    Ok(FedAcParams {
        alpha,
        beta,
        eta,
        gamma,
        lambda: 0.0,
    })
}

fn guard(x: &[f64], machine: usize, step: usize) -> Result<()> {
    let n2 = linalg::norm_sq(x);
    if !n2.is_finite() || n2 > DIVERGENCE_NORM * DIVERGENCE_NORM {
        return Err(Error::Diverged { machine, step });
    }
    Ok(())
}

fn check_start<O: Oracle>(oracle: &O, x0: &[f64], spec: &RunSpec) -> Result<()> {
    spec.validate()?;
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

fn round_ledger(spec: &RunSpec) -> OracleLedger {
    let calls = (spec.machines * spec.steps) as u64;
    OracleLedger {
        gradient: calls,
        draws: calls,
        ..Default::default()
    }
}

/// Local SGD: `K` local heavy-ball SGD steps per machine, then averaging.
pub fn local_sgd<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    eta: f64,
    beta: f64,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    check_start(oracle, x0, spec)?;
    let mut samplers = spec.samplers(oracle.population(), 0);
    let mut x = x0.to_vec();
    let mut record = RunRecord::start(spec.seed, metric(&x), &x);
    for r in 0..spec.rounds {
        let locals: Vec<Result<Vec<f64>>> = samplers
            .par_iter_mut()
            .enumerate()
            .map(|(m, s)| local_steps(oracle, &x, eta, beta, spec.steps, s, m, r))
            .collect();
        let locals = match locals.into_iter().collect::<Result<Vec<_>>>() {
            Ok(l) => l,
            Err(e) => return record.absorb_divergence(e),
        };
        x = linalg::mean_of(&locals);
        record.ledger.absorb(round_ledger(spec));
        record.push_round(metric(&x));
        record.final_point.clone_from(&x);
    }
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn local_steps<O: Oracle>(
    oracle: &O,
    start: &[f64],
    eta: f64,
    beta: f64,
    steps: usize,
    sampler: &mut Sampler,
    machine: usize,
    round: usize,
) -> Result<Vec<f64>> {
    let d = start.len();
    let mut x = start.to_vec();
    let mut prev = start.to_vec();
    let mut next = vec![0.0; d];
    let mut g = vec![0.0; d];
    for k in 0..steps {
        let z = sampler.draw()?;
        g.fill(0.0);
        oracle.add_sample_gradient(&x, z, 1.0, &mut g);
        for j in 0..d {
            next[j] = x[j] - eta * g[j];
        }
        if k > 0 && beta != 0.0 {
            for j in 0..d {
                next[j] += beta * (x[j] - prev[j]);
            }
        }
        guard(&next, machine, round * steps + k)?;
        std::mem::swap(&mut prev, &mut x);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// Minibatch SGD: each round averages `MK` gradients taken at the shared
/// iterate, followed by one heavy-ball step.
pub fn minibatch_sgd<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    eta: f64,
    beta: f64,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    check_start(oracle, x0, spec)?;
    let d = x0.len();
    let mut samplers = spec.samplers(oracle.population(), 0);
    let mut x = x0.to_vec();
    let mut prev = x0.to_vec();
    let mut record = RunRecord::start(spec.seed, metric(&x), &x);
    let inv_k = 1.0 / spec.steps as f64;
    for r in 0..spec.rounds {
        let proposals: Vec<Result<Vec<f64>>> = samplers
            .par_iter_mut()
            .enumerate()
            .map(|(m, s)| {
                let mut g = vec![0.0; d];
                for _ in 0..spec.steps {
                    oracle.add_sample_gradient(&x, s.draw()?, 1.0, &mut g);
                }
                linalg::scale(inv_k, &mut g);
                let mut p: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
                if r > 0 && beta != 0.0 {
                    for j in 0..d {
                        p[j] += beta * (x[j] - prev[j]);
                    }
                }
                guard(&p, m, r)?;
                Ok(p)
            })
            .collect();
        let proposals = match proposals.into_iter().collect::<Result<Vec<_>>>() {
            Ok(p) => p,
            Err(e) => return record.absorb_divergence(e),
        };
        prev = std::mem::replace(&mut x, linalg::mean_of(&proposals));
        record.ledger.absorb(round_ledger(spec));
        record.push_round(metric(&x));
        record.final_point.clone_from(&x);
    }
    Ok(record)
}

/// FedAc with communication after every `K`-th step. The logged metric and
/// returned point are the machine average of `x^ag`.
pub fn fedac<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    params: &FedAcParams,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    check_start(oracle, x0, spec)?;
    params.validate()?;
    let mut samplers = spec.samplers(oracle.population(), 0);
    let mut x = x0.to_vec();
    let mut x_ag = x0.to_vec();
    let mut record = RunRecord::start(spec.seed, metric(&x_ag), &x_ag);
    for r in 0..spec.rounds {
        let locals: Vec<Result<(Vec<f64>, Vec<f64>)>> = samplers
            .par_iter_mut()
            .enumerate()
            .map(|(m, s)| fedac_steps(oracle, &x, &x_ag, params, spec.steps, s, m, r))
            .collect();
        let locals = match locals.into_iter().collect::<Result<Vec<_>>>() {
            Ok(l) => l,
            Err(e) => return record.absorb_divergence(e),
        };
        let (vs, vags): (Vec<_>, Vec<_>) = locals.into_iter().unzip();
        x = linalg::mean_of(&vs);
        x_ag = linalg::mean_of(&vags);
        record.ledger.absorb(round_ledger(spec));
        record.push_round(metric(&x_ag));
        record.final_point.clone_from(&x_ag);
    }
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn fedac_steps<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    x_ag0: &[f64],
    p: &FedAcParams,
    steps: usize,
    sampler: &mut Sampler,
    machine: usize,
    round: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x0.len();
    let (inv_a, inv_b) = (1.0 / p.alpha, 1.0 / p.beta);
    let mut x = x0.to_vec();
    let mut x_ag = x_ag0.to_vec();
    let mut md = vec![0.0; d];
    let mut g = vec![0.0; d];
    for k in 0..steps {
        for j in 0..d {
            md[j] = inv_b * x[j] + (1.0 - inv_b) * x_ag[j];
        }
        g.fill(0.0);
        oracle.add_sample_gradient(&md, sampler.draw()?, 1.0, &mut g);
        if p.lambda != 0.0 {
            linalg::axpy(p.lambda, &md, &mut g);
        }
        for j in 0..d {
            x_ag[j] = md[j] - p.eta * g[j];
            x[j] = (1.0 - inv_a) * x[j] + inv_a * md[j] - p.gamma * g[j];
        }
        guard(&x, machine, round * steps + k)?;
        guard(&x_ag, machine, round * steps + k)?;
    }
    Ok((x, x_ag))
}
