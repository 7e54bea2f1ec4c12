//! Constrained quadratic solver: binary search over a geometric grid of
//! regularization strengths with repeated one-shot solves and majority
//! voting on the solution norm.

use serde::{Deserialize, Serialize};

use crate::dataio::Sampler;
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::Oracle;
use crate::quadcore::{regularized_quadratic_solver, QuadSubproblem, Schedule, TableSchedule};
use crate::record::OracleLedger;

/// Parameters of one constrained solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustSettings {
    /// Trust radius `r̄`.
    pub radius: f64,
    /// Smallest grid value `λ̄`.
    pub lambda_floor: f64,
    /// Grid size `N`.
    pub grid_size: usize,
    /// Repetitions `C` per grid point.
    pub repeats: usize,
    /// Inner SGD steps `K`.
    pub steps: usize,
    pub smoothness: f64,
    pub rho: f64,
}

impl TrustSettings {
    /// `Λ₁ = {λ̄ (3/2)^(n-1) : n = 1..N}`
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_size)
            .map(|n| self.lambda_floor * 1.5f64.powi(n as i32))
            .collect()
    }

    pub fn max_grid_iterations(&self) -> usize {
        floor_log2(self.grid_size) + 1
    }

    /// Worst-case number of one-shot solves (communication rounds) per call.
    pub fn max_solver_calls(&self) -> usize {
        self.repeats * self.max_grid_iterations() + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.lambda_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "trust radius {} and regularization floor {} must be positive",
                self.radius, self.lambda_floor
            )));
        }
        if self.grid_size == 0 || self.repeats == 0 || self.steps == 0 {
            return Err(Error::InvalidParameter("grid size, repetitions and steps must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn floor_log2(n: usize) -> usize {
    (usize::BITS - 1 - n.max(1).leading_zeros()) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrustOutcome {
    /// A majority landed in the acceptance band at this `λ`.
    Accepted { lambda: f64 },
    /// The votes split; the zero step is returned.
    Zero { lambda: f64 },
    /// The grid emptied; solved at the floor and projected.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustSolve {
    pub u: Vec<f64>,
    pub outcome: TrustOutcome,
    pub grid_iterations: usize,
    pub solver_calls: usize,
    pub ledger: OracleLedger,
}

/// Lower median of a nonempty sorted grid.
pub fn median_of(grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("median of an empty grid".into()));
    }
    Ok(grid[(grid.len() - 1) / 2])
}

/// Scales `u` by `min{1, cap/|u|}`.
pub fn project(u: &mut [f64], cap: f64) {
    let n = linalg::norm(u);
    if n > cap {
        linalg::scale(cap / n, u);
        while linalg::norm(u) > cap {
            linalg::scale(1.0 - f64::EPSILON, u);
        }
    }
}

pub fn constrained_quadratic_solver<O: Oracle>(
    base: &QuadSubproblem<'_, O>,
    settings: &TrustSettings,
    samplers: &mut [Sampler],
) -> Result<TrustSolve> {
    settings.validate()?;
    let r = settings.radius;
    let grid = settings.grid();
    let (mut lo, mut hi) = (0usize, grid.len());
    let mut ledger = OracleLedger::default();
    let mut calls = 0usize;
    let mut iterations = 0usize;

    let solve = |lambda: f64, samplers: &mut [Sampler], ledger: &mut OracleLedger| -> Result<Vec<f64>> {
        let sub = base.with_lambda(lambda)?;
        let schedule = Schedule::Table(TableSchedule::new(
            lambda,
            settings.steps,
            settings.smoothness,
            settings.rho,
            sub.xi_bar(),
        )?);
        let out = regularized_quadratic_solver(&sub, &schedule, 0.0, samplers)?;
        ledger.absorb(out.ledger);
        Ok(out.u)
    };

    while lo < hi {
        iterations += 1;
        let mid = lo + (hi - lo - 1) / 2;
        let lambda = grid[mid];
        let mut in_band = 0;
        let mut small = 0;
        for _ in 0..settings.repeats {
            let n = linalg::norm(&solve(lambda, samplers, &mut ledger)?);
            calls += 1;
            if (1.5 * r..=3.5 * r).contains(&n) {
                in_band += 1;
            }
            if n <= 2.5 * r {
                small += 1;
            }
        }
        let large = settings.repeats - small;
        tracing::trace!(lambda, in_band, small, large, "grid vote");
        if 2 * in_band > settings.repeats {
            let mut u = solve(lambda, samplers, &mut ledger)?;
            calls += 1;
            project(&mut u, 5.0 * r);
            return Ok(TrustSolve {
                u,
                outcome: TrustOutcome::Accepted { lambda },
                grid_iterations: iterations,
                solver_calls: calls,
                ledger,
            });
        } else if 2 * small > settings.repeats {
            hi = mid;
        } else if 2 * large > settings.repeats {
            lo = mid + 1;
        } else {
            return Ok(TrustSolve {
                u: vec![0.0; base.base().len()],
                outcome: TrustOutcome::Zero { lambda },
                grid_iterations: iterations,
                solver_calls: calls,
                ledger,
            });
        }
    }

    let mut u = solve(settings.lambda_floor, samplers, &mut ledger)?;
    calls += 1;
    project(&mut u, 5.0 * r);
    Ok(TrustSolve {
        u,
        outcome: TrustOutcome::Fallback,
        grid_iterations: iterations,
        solver_calls: calls,
        ledger,
    })
}
