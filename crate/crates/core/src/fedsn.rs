//! The outer stochastic Newton loop and its theory-driven hyperparameters.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::ProblemConstants;
use crate::linalg;
use crate::oracle::Oracle;
use crate::quadcore::{OracleCase, QuadSubproblem};
use crate::record::{Metric, RunRecord, RunSpec};
use crate::trustquad::{constrained_quadratic_solver, TrustSettings};

const LN_51200: f64 = 10.843_494_811_027_599;

/// `ζ = 4096 + 4(80 + 32 ln K + 24 ln(1 + 2αB))²`
pub fn zeta(steps: usize, alpha: f64, distance: f64) -> f64 {
    let inner = 80.0 + 32.0 * (steps as f64).ln() + 24.0 * (2.0 * alpha * distance).ln_1p();
    4096.0 + 4.0 * inner * inner
}

/// `(R / 4ζ) ln²(R/ζ)` before flooring.
pub fn outer_iterations_raw(rounds: usize, zeta: f64) -> f64 {
    let r = rounds as f64;
    let l = (r / zeta).ln();
    r / (4.0 * zeta) * l * l
}

/// The seven lower bounds whose maximum is `λmin`.
pub fn lambda_min_terms(smoothness: f64, rho: f64, sigma: f64, machines: usize, steps: usize, radius: f64) -> [f64; 7] {
    let (h, k) = (smoothness, steps as f64);
    let mk = (machines as f64 * k).sqrt();
    [
        2.0 * E * h / (k - 2.0),
        2.0 * rho / k.sqrt(),
        32.0 * E * h * LN_51200 / k,
        4.0 * rho * (2.0 * LN_51200).sqrt() / k.sqrt(),
        320.0 * std::f64::consts::SQRT_2 * rho / mk,
        320.0 * sigma / (radius * mk),
        8.0 * E * h / (k - 16.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub machines: usize,
    pub steps: usize,
    pub budget: usize,
    pub t: usize,
    pub beta: f64,
    pub r_bar: f64,
    pub xi_bar: f64,
    pub lambda_min: f64,
    pub grid_size: usize,
    pub repeats: usize,
    pub zeta: f64,
    pub constants: ProblemConstants,
    pub case: OracleCase,
}

impl Hyperparams {
    pub fn trust_settings(&self) -> TrustSettings {
        TrustSettings {
            radius: self.r_bar,
            lambda_floor: self.lambda_min,
            grid_size: self.grid_size,
            repeats: self.repeats,
            steps: self.steps,
            smoothness: self.constants.smoothness,
            rho: self.constants.rho,
        }
    }

    pub fn rounds_per_call(&self) -> usize {
        self.trust_settings().max_solver_calls()
    }

    pub fn required_rounds(&self) -> usize {
        self.t * self.rounds_per_call()
    }

    pub fn is_feasible(&self) -> bool {
        self.required_rounds() <= self.budget
    }

    /// The budget `e²ζ` above which the rate guarantee applies.
    pub fn theory_threshold(&self) -> f64 {
        E * E * self.zeta
    }
}

fn check_constants(c: &ProblemConstants) -> Result<()> {
    let ok = c.smoothness > 0.0
        && c.distance > 0.0
        && c.sigma >= 0.0
        && c.rho >= 0.0
        && c.alpha >= 0.0
        && [c.smoothness, c.distance, c.sigma, c.rho, c.alpha]
            .iter()
            .all(|v| v.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "problem constants must be finite with H, B > 0 and σ, ρ, α ≥ 0: {c:?}"
        )))
    }
}

pub fn derive_hyperparams(
    machines: usize,
    steps: usize,
    rounds: usize,
    constants: &ProblemConstants,
) -> Result<Hyperparams> {
    derive(machines, steps, rounds, constants, true)
}

fn derive(machines: usize, steps: usize, rounds: usize, constants: &ProblemConstants, warn: bool) -> Result<Hyperparams> {
    check_constants(constants)?;
    if machines == 0 || rounds == 0 {
        return Err(Error::InvalidParameter("M and R must be ≥ 1".into()));
    }
    if steps <= 16 {
        return Err(Error::InvalidParameter(format!(
            "K = {steps} leaves the regularization bound undefined; K must exceed 16"
        )));
    }
    if warn && steps < 175 {
        tracing::warn!(steps, "K below 175: outside the regime of the convergence guarantee");
    }
    let c = constants;
    let zeta = zeta(steps, c.alpha, c.distance);
    let raw = outer_iterations_raw(rounds, zeta).floor();
    let t = if raw < 1.0 {
        if warn {
            tracing::warn!(rounds, zeta, "budget yields T < 1; using T = 1");
        }
        1
    } else {
        raw as usize
    };
    let tf = t as f64;
    let qsc_cap = if c.alpha > 0.0 { 1.0 / (5.0 * c.alpha) } else { f64::INFINITY };
    let r_bar = (32.0 * c.distance / tf * (tf * steps as f64).ln()).min(qsc_cap);
    let xi_bar = (c.alpha * r_bar).exp();
    let lambda_min = lambda_min_terms(c.smoothness, c.rho, c.sigma, machines, steps, r_bar)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let h = c.smoothness;
    let reach = h * (c.distance + 5.0 * tf * r_bar);
    let grid_size = (1.0 + 2.5 * (reach / (3.0 * lambda_min * r_bar)).ln()).ceil().max(1.0) as usize;
    let log_n = (grid_size as f64).log2().ceil().max(1.0);
    let inner = log_n * (4.0 + E * h / lambda_min + 80.0 * reach / (lambda_min * r_bar));
    let repeats = (8.0 * inner.ln()).ceil().max(1.0) as usize;
    Ok(Hyperparams {
        machines,
        steps,
        budget: rounds,
        t,
        beta: 0.0,
        r_bar,
        xi_bar,
        lambda_min,
        grid_size,
        repeats,
        zeta,
        constants: *constants,
        case: OracleCase::DifferentSamples,
    })
}

/// Smallest budget `R` (found by doubling then bisection) whose derived
/// schedule fits within `R` rounds.
pub fn minimal_feasible_budget(machines: usize, steps: usize, constants: &ProblemConstants) -> Result<usize> {
    let feasible = |r: usize| derive(machines, steps, r, constants, false).map(|h| h.is_feasible());
    let mut hi = 1usize;
    while !feasible(hi)? {
        hi = hi.checked_mul(2).ok_or_else(|| Error::InvalidParameter("no feasible round budget".into()))?;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Runs `T` outer iterations `x ← x + Δx̃` where `Δx̃` comes from the
/// constrained quadratic solver at `x`. One trajectory entry is logged per
/// consumed communication round.
pub fn fedsn<O: Oracle>(
    oracle: &O,
    x0: &[f64],
    hyper: &Hyperparams,
    spec: &RunSpec,
    metric: Metric<'_>,
) -> Result<RunRecord> {
    spec.validate()?;
    if spec.machines != hyper.machines || spec.steps != hyper.steps || spec.rounds != hyper.budget {
        return Err(Error::InvalidParameter(
            "hyperparameters were derived for a different (M, K, R)".into(),
        ));
    }
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    if !hyper.is_feasible() {
        return Err(Error::RoundBudget {
            budget: hyper.budget,
            required: hyper.required_rounds(),
            minimal: minimal_feasible_budget(hyper.machines, hyper.steps, &hyper.constants)?,
        });
    }
    let settings = hyper.trust_settings();
    let mut samplers = spec.samplers(oracle.population(), 0);
    let mut x = x0.to_vec();
    let mut current = metric(&x);
    let mut record = RunRecord::start(spec.seed, current, &x);
    for t in 0..hyper.t {
        let sub = QuadSubproblem::new(oracle, &x, hyper.xi_bar, hyper.lambda_min, hyper.case)?;
        let step = match constrained_quadratic_solver(&sub, &settings, &mut samplers) {
            Ok(step) => step,
            Err(e) => return record.absorb_divergence(e),
        };
        tracing::debug!(t, outcome = ?step.outcome, calls = step.solver_calls, "outer iteration");
        linalg::axpy(1.0, &step.u, &mut x);
        record.ledger.absorb(step.ledger);
        for _ in 1..step.solver_calls {
            record.push_round(current);
        }
        current = metric(&x);
        record.push_round(current);
        record.final_point.clone_from(&x);
    }
    Ok(record)
}
