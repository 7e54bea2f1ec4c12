//! Regularized quadratic subproblems
//! `Q_λ(u) = ½ u'(ξ̄∇²F(x) + λI)u + ∇F(x)'u`
//! solved by one-shot averaging of independent SGD runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Sampler;
use crate::error::{Error, Result};
use crate::glm::solve_spd;
use crate::linalg;
use crate::oracle::Oracle;
use crate::record::OracleLedger;

/// Iterates whose norm exceeds this abort the solve.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCase {
    /// Independent samples `z`, `z'` for the gradient and the HVP.
    DifferentSamples,
    /// One sample shared by both oracles.
    #[default]
    SameSample,
}

impl OracleCase {
    pub fn draws_per_access(self) -> u64 {
        match self {
            OracleCase::DifferentSamples => 2,
            OracleCase::SameSample => 1,
        }
    }
}

/// Indices consumed by one gradient access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draws {
    pub gradient: usize,
    pub hvp: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadSubproblem<'a, O> {
    oracle: &'a O,
    base: &'a [f64],
    xi_bar: f64,
    lambda: f64,
    case: OracleCase,
}

impl<'a, O: Oracle> QuadSubproblem<'a, O> {
    pub fn new(oracle: &'a O, base: &'a [f64], xi_bar: f64, lambda: f64, case: OracleCase) -> Result<Self> {
        if base.len() != oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dim(),
                got: base.len(),
            });
        }
        if !(xi_bar >= 1.0) || !xi_bar.is_finite() {
            return Err(Error::InvalidParameter(format!("local stability {xi_bar} must be ≥ 1")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("regularization {lambda} must be ≥ 0")));
        }
        Ok(QuadSubproblem {
            oracle,
            base,
            xi_bar,
            lambda,
            case,
        })
    }

    pub fn oracle(&self) -> &'a O {
        self.oracle
    }

    pub fn base(&self) -> &'a [f64] {
        self.base
    }

    pub fn xi_bar(&self) -> f64 {
        self.xi_bar
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn case(&self) -> OracleCase {
        self.case
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.oracle, self.base, self.xi_bar, lambda, self.case)
    }

    /// Writes `γ = ξ̄ h(x, u; z') + λu + g(x; z)` into `out`.
    pub fn gradient_access_into(&self, u: &[f64], sampler: &mut Sampler, out: &mut [f64]) -> Result<Draws> {
        let z = sampler.draw()?;
        let z_hvp = match self.case {
            OracleCase::DifferentSamples => sampler.draw()?,
            OracleCase::SameSample => z,
        };
        out.fill(0.0);
        self.oracle.add_sample_hvp(self.base, u, z_hvp, self.xi_bar, out);
        if self.lambda != 0.0 {
            linalg::axpy(self.lambda, u, out);
        }
        self.oracle.add_sample_gradient(self.base, z, 1.0, out);
        Ok(Draws {
            gradient: z,
            hvp: z_hvp,
        })
    }

    pub fn quad_gradient_access(&self, u: &[f64], sampler: &mut Sampler) -> Result<(Vec<f64>, Draws)> {
        if u.len() != self.base.len() {
            return Err(Error::DimensionMismatch {
                expected: self.base.len(),
                got: u.len(),
            });
        }
        let mut out = vec![0.0; u.len()];
        let draws = self.gradient_access_into(u, sampler, &mut out)?;
        Ok((out, draws))
    }

    /// Exact `∇Q_λ(u) = (ξ̄∇²F(x) + λI)u + ∇F(x)`.
    pub fn exact_gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = self.oracle.hessian_vector(self.base, u);
        linalg::scale(self.xi_bar, &mut g);
        linalg::axpy(self.lambda, u, &mut g);
        linalg::axpy(1.0, &self.oracle.gradient(self.base), &mut g);
        g
    }

    /// Exact `Q_λ(u)`.
    pub fn value(&self, u: &[f64]) -> f64 {
        let hu = self.oracle.hessian_vector(self.base, u);
        let curv = self.xi_bar * linalg::dot(u, &hu) + self.lambda * linalg::norm_sq(u);
        0.5 * curv + linalg::dot(&self.oracle.gradient(self.base), u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    SmallK,
    LargeK,
}

/// Stepsizes `η_k(λ)` and weights `w_k(λ)` for the regularized quadratic
/// solver, following the two-regime schedule: constant `η_λ` with
/// geometrically growing weights when `K` is small relative to the
/// conditioning, otherwise a constant first half (ignored by the average)
/// followed by a `1/k`-type decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSchedule {
    lambda: f64,
    steps: usize,
    smoothness: f64,
    rho: f64,
    xi_bar: f64,
}

impl TableSchedule {
    pub fn new(lambda: f64, steps: usize, smoothness: f64, rho: f64, xi_bar: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "table schedule needs λ > 0 (got {lambda}); use the constant schedule at λ = 0"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("schedule needs K ≥ 1".into()));
        }
        Ok(TableSchedule {
            lambda,
            steps,
            smoothness,
            rho,
            xi_bar,
        })
    }

    /// `max{ξ̄H + λ, ρ²/λ}`
    fn conditioning(&self) -> f64 {
        (self.xi_bar * self.smoothness + self.lambda).max(self.rho * self.rho / self.lambda)
    }

    /// The branch threshold `(2/λ)·max{ξ̄H + λ, ρ²/λ}`.
    pub fn threshold(&self) -> f64 {
        2.0 / self.lambda * self.conditioning()
    }

    /// `a = (8/λ)·max{ξ̄H + λ, ρ²/λ}`
    pub fn pivot(&self) -> f64 {
        8.0 / self.lambda * self.conditioning()
    }

    pub fn eta_lambda(&self) -> f64 {
        let l = self.lambda;
        0.5 * (1.0 / (self.xi_bar * self.smoothness + l)).min(l / (self.rho * self.rho))
    }

    pub fn branch(&self) -> Branch {
        if self.steps as f64 <= self.threshold() {
            Branch::SmallK
        } else {
            Branch::LargeK
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if k >= self.steps {
            return Err(Error::StepOutOfRange { k, steps: self.steps });
        }
        Ok(())
    }

    pub fn eta_k(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        let half = self.steps / 2;
        Ok(match self.branch() {
            Branch::LargeK if k >= half => 4.0 / (self.lambda * (self.pivot() + (k - half) as f64)),
            _ => self.eta_lambda(),
        })
    }

    pub fn w_k(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        let half = self.steps / 2;
        Ok(match self.branch() {
            Branch::SmallK => {
                let eta = self.eta_lambda();
                let base = 1.0 - self.lambda * eta + eta * eta * self.rho * self.rho;
                base.powi(-(k as i32) - 1)
            }
            Branch::LargeK if k < half => 0.0,
            Branch::LargeK => self.pivot() + (k - half) as f64 - 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Table(TableSchedule),
    /// `η_k = η`, `w_k = 1/K`: the mode used at `λ = 0`.
    Constant { eta: f64, steps: usize },
}

impl Schedule {
    pub fn constant(eta: f64, steps: usize) -> Result<Self> {
        if !(eta > 0.0) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "constant schedule needs η > 0 and K ≥ 1 (got η = {eta}, K = {steps})"
            )));
        }
        Ok(Schedule::Constant { eta, steps })
    }

    pub fn steps(&self) -> usize {
        match self {
            Schedule::Table(t) => t.steps,
            Schedule::Constant { steps, .. } => *steps,
        }
    }

    pub fn eta_k(&self, k: usize) -> Result<f64> {
        match self {
            Schedule::Table(t) => t.eta_k(k),
            Schedule::Constant { eta, steps } if k < *steps => Ok(*eta),
            Schedule::Constant { steps, .. } => Err(Error::StepOutOfRange { k, steps: *steps }),
        }
    }

    pub fn w_k(&self, k: usize) -> Result<f64> {
        match self {
            Schedule::Table(t) => t.w_k(k),
            Schedule::Constant { steps, .. } if k < *steps => Ok(1.0 / *steps as f64),
            Schedule::Constant { steps, .. } => Err(Error::StepOutOfRange { k, steps: *steps }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadSolve {
    pub u: Vec<f64>,
    pub ledger: OracleLedger,
}

/// One-shot averaged SGD on `Q_λ`: every sampler is one machine running
/// `K` steps from `u₀ = 0`; iterate `u_{k+1}` carries weight `w_k`, and the
/// weighted iterates of all machines are averaged in a single communication.
pub fn regularized_quadratic_solver<O: Oracle>(
    sub: &QuadSubproblem<'_, O>,
    schedule: &Schedule,
    momentum: f64,
    samplers: &mut [Sampler],
) -> Result<QuadSolve> {
    let machines = samplers.len();
    if machines == 0 {
        return Err(Error::InvalidParameter("solver needs at least one machine".into()));
    }
    let steps = schedule.steps();
    let etas = (0..steps).map(|k| schedule.eta_k(k)).collect::<Result<Vec<_>>>()?;
    let weights = (0..steps).map(|k| schedule.w_k(k)).collect::<Result<Vec<_>>>()?;
    let wsum: f64 = weights.iter().sum();
    if wsum == 0.0 || !wsum.is_finite() {
        return Err(Error::DegenerateWeights);
    }

    let per_machine: Vec<Result<Vec<f64>>> = samplers
        .par_iter_mut()
        .enumerate()
        .map(|(m, sampler)| run_machine(sub, &etas, &weights, momentum, sampler, m))
        .collect();

    let accs = per_machine.into_iter().collect::<Result<Vec<_>>>()?;
    let mut u = linalg::mean_of(&accs);
    linalg::scale(1.0 / wsum, &mut u);

    let accesses = (machines * steps) as u64;
    Ok(QuadSolve {
        u,
        ledger: OracleLedger {
            quad_access: accesses,
            draws: accesses * sub.case.draws_per_access(),
            ..Default::default()
        },
    })
}

fn run_machine<O: Oracle>(
    sub: &QuadSubproblem<'_, O>,
    etas: &[f64],
    weights: &[f64],
    momentum: f64,
    sampler: &mut Sampler,
    machine: usize,
) -> Result<Vec<f64>> {
    let d = sub.base.len();
    let mut u = vec![0.0; d];
    let mut prev = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut gamma = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for (k, (&eta, &w)) in etas.iter().zip(weights).enumerate() {
        sub.gradient_access_into(&u, sampler, &mut gamma)?;
        for j in 0..d {
            next[j] = u[j] - eta * gamma[j];
        }
        if k > 0 && momentum != 0.0 {
            for j in 0..d {
                next[j] += momentum * (u[j] - prev[j]);
            }
        }
        let n2 = linalg::norm_sq(&next);
        if !n2.is_finite() || n2 > DIVERGENCE_NORM * DIVERGENCE_NORM {
            return Err(Error::Diverged { machine, step: k });
        }
        std::mem::swap(&mut prev, &mut u);
        std::mem::swap(&mut u, &mut next);
        if w != 0.0 {
            linalg::axpy(w, &u, &mut acc);
        }
    }
    Ok(acc)
}

/// Exact minimizer `u*_λ` of `Q_λ` by a dense solve, and its norm `r*(λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub u: Vec<f64>,
    pub radius: f64,
}

pub fn exact_solve<O: Oracle>(sub: &QuadSubproblem<'_, O>) -> ExactSolution {
    let d = sub.base.len();
    let mut m = sub.oracle.hessian(sub.base) * sub.xi_bar;
    for j in 0..d {
        m[(j, j)] += sub.lambda;
    }
    let g = sub.oracle.gradient(sub.base);
    let mut u = solve_spd(m, &g);
    linalg::scale(-1.0, &mut u);
    let radius = linalg::norm(&u);
    ExactSolution { u, radius }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(lambda: f64, steps: usize) -> TableSchedule {
        TableSchedule::new(lambda, steps, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn large_k_tail() {
        let s = table(1.0, 100);
        assert_eq!(s.branch(), Branch::LargeK);
        assert_eq!(s.pivot(), 16.0);
        assert!((s.eta_k(60).unwrap() - 4.0 / 26.0).abs() <= 1e-14);
        assert_eq!(s.w_k(60).unwrap(), 25.0);
    }

    #[test]
    fn large_k_head() {
        let s = table(1.0, 100);
        assert_eq!(s.eta_k(10).unwrap(), 0.25);
        assert_eq!(s.w_k(10).unwrap(), 0.0);
        assert_eq!(s.eta_k(49).unwrap(), 0.25);
        assert_eq!(s.w_k(50).unwrap(), 15.0);
    }

    #[test]
    fn small_k_at_threshold() {
        let s = table(1.0, 4);
        assert_eq!(s.threshold(), 4.0);
        assert_eq!(s.branch(), Branch::SmallK);
        for k in 0..4 {
            assert_eq!(s.eta_k(k).unwrap(), 0.25);
            let expected = 0.8125f64.powi(-(k as i32) - 1);
            assert!((s.w_k(k).unwrap() - expected).abs() <= 1e-14 * expected);
        }
        assert_eq!(table(1.0, 5).branch(), Branch::LargeK);
    }

    #[test]
    fn out_of_range_and_zero_lambda() {
        assert!(matches!(table(1.0, 4).eta_k(4), Err(Error::StepOutOfRange { .. })));
        assert!(matches!(table(1.0, 4).w_k(9), Err(Error::StepOutOfRange { .. })));
        assert!(TableSchedule::new(0.0, 4, 1.0, 1.0, 1.0).is_err());
        assert!(Schedule::constant(0.0, 3).is_err());
        let c = Schedule::constant(0.1, 4).unwrap();
        assert_eq!((c.eta_k(3).unwrap(), c.w_k(3).unwrap()), (0.1, 0.25));
        assert!(c.eta_k(4).is_err());
    }
}
