//! Regularized logistic regression `F(x) = mean_i log(1 + exp(-b_i a_i'x)) + (mu/2)|x|^2`
//! and its exact and stochastic oracles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Sampler};
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{Objective, Oracle};
use crate::seed::SeedPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Logistic,
}

/// `log(1 + exp(-t))` without overflow.
pub fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `σ(t)σ(-t)`, the logistic curvature.
pub fn logistic_curvature(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub vector: Vec<f64>,
    pub drawn_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HvpEstimate {
    pub vector: Vec<f64>,
    pub drawn_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// The constants `(H, B, σ, ρ, α)` the theory-driven hyperparameters need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ProblemConstants {
    /// Smoothness `H`.
    pub smoothness: f64,
    /// Distance bound `B ≥ |x0 - x*|`.
    pub distance: f64,
    /// Gradient noise `σ`.
    pub sigma: f64,
    /// HVP noise scale `ρ`.
    pub rho: f64,
    /// Quasi-self-concordance `α`.
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct GlmProblem {
    data: Arc<Dataset>,
    mu: f64,
    loss: LossKind,
    alpha: f64,
}

impl GlmProblem {
    pub fn new(data: Arc<Dataset>, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge strength {mu} must be ≥ 0")));
        }
        let alpha = data.max_row_norm();
        Ok(GlmProblem {
            data,
            mu,
            loss: LossKind::Logistic,
            alpha,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn shared_dataset(&self) -> Arc<Dataset> {
        Arc::clone(&self.data)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn margin(&self, x: &[f64], z: usize) -> f64 {
        let r = self.data.row(z);
        r.label * r.dot(x)
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.gradient(x))
    }

    pub fn stochastic_gradient(&self, x: &[f64], sampler: &mut Sampler) -> Result<GradEstimate> {
        self.check_dim(x)?;
        let z = sampler.draw()?;
        let mut vector = vec![0.0; x.len()];
        self.add_sample_gradient(x, z, 1.0, &mut vector);
        Ok(GradEstimate {
            vector,
            drawn_index: z,
        })
    }

    pub fn stochastic_hvp(&self, x: &[f64], u: &[f64], z: usize) -> Result<HvpEstimate> {
        self.check_dim(x)?;
        self.check_dim(u)?;
        if z >= self.data.count() {
            return Err(Error::IndexOutOfRange {
                index: z,
                count: self.data.count(),
            });
        }
        let mut vector = vec![0.0; x.len()];
        self.add_sample_hvp(x, u, z, 1.0, &mut vector);
        Ok(HvpEstimate {
            vector,
            drawn_index: z,
        })
    }

    /// Quasi-self-concordance constant `max_i |b_i a_i|` (computed once).
    pub fn qsc_alpha(&self) -> f64 {
        self.alpha
    }

    /// Default constants: `H = max|a|²/4 + mu`, `ρ = max|a|²/4`, `σ` the
    /// empirical gradient spread at `x = 0` over `probe_budget` draws, and
    /// the supplied distance bound `B`.
    pub fn estimate_constants(&self, probe_budget: usize, distance: f64, seed: u64) -> ProblemConstants {
        let quarter = self.alpha * self.alpha / 4.0;
        ProblemConstants {
            smoothness: quarter + self.mu,
            distance,
            sigma: self.probe_sigma(probe_budget.max(2), seed),
            rho: quarter,
            alpha: self.alpha,
        }
    }

    fn probe_sigma(&self, budget: usize, seed: u64) -> f64 {
        let d = self.data.dim();
        let x = vec![0.0; d];
        let mut sampler = Sampler::uniform(self.data.count(), SeedPath::root(seed).child(0x51_6a));
        let draws: Vec<Vec<f64>> = (0..budget)
            .map(|_| {
                let z = sampler.draw().expect("uniform sampler never exhausts");
                let mut g = vec![0.0; d];
                self.add_sample_gradient(&x, z, 1.0, &mut g);
                g
            })
            .collect();
        let mean = linalg::mean_of(&draws);
        let ss: f64 = draws.iter().map(|g| linalg::dist(g, &mean).powi(2)).sum();
        (ss / budget as f64).sqrt()
    }

    /// Exact (undamped) Newton iterations until `|∇F| ≤ tol`.
    pub fn newton_reference(&self, x0: Option<&[f64]>, tol: f64, max_iters: usize) -> Result<NewtonSolution> {
        let d = self.data.dim();
        let mut x = match x0 {
            Some(x0) => {
                self.check_dim(x0)?;
                x0.to_vec()
            }
            None => vec![0.0; d],
        };
        let mut g = self.gradient(&x);
        let mut gnorm = linalg::norm(&g);
        let mut iterations = 0;
        while gnorm > tol {
            if iterations == max_iters || !gnorm.is_finite() {
                return Err(Error::NotConverged {
                    iterations,
                    grad_norm: gnorm,
                });
            }
            let step = solve_spd(self.hessian(&x), &g);
            linalg::axpy(-1.0, &step, &mut x);
            g = self.gradient(&x);
            gnorm = linalg::norm(&g);
            iterations += 1;
        }
        Ok(NewtonSolution {
            value: self.value(&x),
            x,
            grad_norm: gnorm,
            iterations,
        })
    }
}

/// Solves `H s = g` by Cholesky, adding a `1e-10·I` floor when `H` is not
/// numerically positive definite.
pub(crate) fn solve_spd(h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let rhs = DVector::from_column_slice(g);
    if let Some(ch) = h.clone().cholesky() {
        return ch.solve(&rhs).as_slice().to_vec();
    }
    tracing::warn!("singular system, applying a 1e-10 Tikhonov floor");
    let n = h.nrows();
    let floored = h + DMatrix::identity(n, n) * 1e-10;
    match floored.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).as_slice().to_vec(),
        None => floored
            .lu()
            .solve(&rhs)
            .map(|s| s.as_slice().to_vec())
            .unwrap_or_else(|| vec![f64::NAN; n]),
    }
}

impl Objective for GlmProblem {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sum: f64 = (0..self.data.count())
            .map(|i| log1p_exp_neg(self.margin(x, i)))
            .sum();
        sum / self.data.count() as f64 + 0.5 * self.mu * linalg::norm_sq(x)
    }
}

impl Oracle for GlmProblem {
    fn population(&self) -> usize {
        self.data.count()
    }

    fn add_sample_gradient(&self, x: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        let r = self.data.row(z);
        let t = r.label * r.dot(x);
        let coef = -r.label * sigmoid(-t);
        if self.mu != 0.0 {
            linalg::axpy(scale * self.mu, x, out);
        }
        r.add_scaled(scale * coef, out);
    }

    fn add_sample_hvp(&self, x: &[f64], u: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        let r = self.data.row(z);
        let s = logistic_curvature(r.label * r.dot(x));
        if self.mu != 0.0 {
            linalg::axpy(scale * self.mu, u, out);
        }
        r.add_scaled(scale * s * r.dot(u), out);
    }

    fn sample_curvature(&self, x: &[f64], u: &[f64], z: usize) -> f64 {
        let r = self.data.row(z);
        let au = r.dot(u);
        logistic_curvature(r.label * r.dot(x)) * au * au + self.mu * linalg::norm_sq(u)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.data.count() as f64;
        let mut g = vec![0.0; x.len()];
        for i in 0..self.data.count() {
            let r = self.data.row(i);
            let t = r.label * r.dot(x);
            r.add_scaled(-r.label * sigmoid(-t), &mut g);
        }
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = *gi / n + self.mu * xi;
        }
        g
    }

    fn hessian_vector(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.data.count() as f64;
        let mut h = vec![0.0; x.len()];
        for i in 0..self.data.count() {
            let r = self.data.row(i);
            let s = logistic_curvature(r.label * r.dot(x));
            r.add_scaled(s * r.dot(u), &mut h);
        }
        for (hi, ui) in h.iter_mut().zip(u) {
            *hi = *hi / n + self.mu * ui;
        }
        h
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.data.dim();
        let n = self.data.count() as f64;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..self.data.count() {
            let r = self.data.row(i);
            let s = logistic_curvature(r.label * r.dot(x));
            for (&j, &vj) in r.indices.iter().zip(r.values) {
                for (&k, &vk) in r.indices.iter().zip(r.values) {
                    m[(j as usize, k as usize)] += s * vj * vk;
                }
            }
        }
        m /= n;
        for j in 0..d {
            m[(j, j)] += self.mu;
        }
        m
    }
}
