//! Oracle interfaces consumed by every algorithm.
//!
//! An [`Oracle`] exposes the per-sample stochastic gradient `g(x; z)` and
//! Hessian-vector product `h(x, u; z)` of an objective whose population is a
//! finite index set `0..population()`. Randomness lives entirely with the
//! caller, who draws `z` from its own [`Sampler`](crate::dataio::Sampler).

use nalgebra::DMatrix;

use crate::linalg;

pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

pub trait Oracle: Objective {
    fn population(&self) -> usize;

    /// `out += scale * g(x; z)`
    fn add_sample_gradient(&self, x: &[f64], z: usize, scale: f64, out: &mut [f64]);

    /// `out += scale * h(x, u; z)`
    fn add_sample_hvp(&self, x: &[f64], u: &[f64], z: usize, scale: f64, out: &mut [f64]);

    /// `u' h(x, u; z)`, the per-sample curvature along `u`.
    fn sample_curvature(&self, x: &[f64], u: &[f64], z: usize) -> f64 {
        let mut h = vec![0.0; self.dim()];
        self.add_sample_hvp(x, u, z, 1.0, &mut h);
        linalg::dot(u, &h)
    }

    /// Exact gradient; the default averages every sample gradient.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.population();
        let mut g = vec![0.0; self.dim()];
        for z in 0..n {
            self.add_sample_gradient(x, z, 1.0, &mut g);
        }
        linalg::scale(1.0 / n as f64, &mut g);
        g
    }

    /// Exact Hessian-vector product; the default averages every sample HVP.
    fn hessian_vector(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.population();
        let mut h = vec![0.0; self.dim()];
        for z in 0..n {
            self.add_sample_hvp(x, u, z, 1.0, &mut h);
        }
        linalg::scale(1.0 / n as f64, &mut h);
        h
    }

    /// Dense Hessian, assembled column by column by default.
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.hessian_vector(x, &e);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn population(&self) -> usize {
        (**self).population()
    }
    fn add_sample_gradient(&self, x: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        (**self).add_sample_gradient(x, z, scale, out)
    }
    fn add_sample_hvp(&self, x: &[f64], u: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        (**self).add_sample_hvp(x, u, z, scale, out)
    }
    fn sample_curvature(&self, x: &[f64], u: &[f64], z: usize) -> f64 {
        (**self).sample_curvature(x, u, z)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn hessian_vector(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).hessian_vector(x, u)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).hessian(x)
    }
}

/// Zero-variance wrapper: every "sample" returns the exact gradient and
/// Hessian action of the wrapped objective. Its population is a single
/// index, so samplers built for it always draw `0`.
#[derive(Debug, Clone, Copy)]
pub struct FullBatch<O>(pub O);

impl<O: Objective> Objective for FullBatch<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }
}

impl<O: Oracle> Oracle for FullBatch<O> {
    fn population(&self) -> usize {
        1
    }
    fn add_sample_gradient(&self, x: &[f64], _z: usize, scale: f64, out: &mut [f64]) {
        linalg::axpy(scale, &self.0.gradient(x), out);
    }
    fn add_sample_hvp(&self, x: &[f64], u: &[f64], _z: usize, scale: f64, out: &mut [f64]) {
        linalg::axpy(scale, &self.0.hessian_vector(x, u), out);
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.gradient(x)
    }
    fn hessian_vector(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.0.hessian_vector(x, u)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.0.hessian(x)
    }
}

/// `F(x) = ½ x'Ax + c'x` with optional zero-mean per-sample noise:
/// `g(x; z) = Ax + c + e_z` and `h(x, u; z) = (A + diag(d_z)) u`.
///
/// Used as a closed-form test objective for the solvers.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    c: Vec<f64>,
    grad_noise: Vec<Vec<f64>>,
    hvp_noise: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, c: Vec<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == c.len());
        let d = c.len();
        Quadratic {
            a,
            c,
            grad_noise: vec![vec![0.0; d]],
            hvp_noise: vec![vec![0.0; d]],
        }
    }

    /// Adds per-sample noise vectors; both lists are centred to zero mean
    /// and must have the same length (the population size).
    pub fn with_noise(mut self, mut grad_noise: Vec<Vec<f64>>, mut hvp_noise: Vec<Vec<f64>>) -> Self {
        assert_eq!(grad_noise.len(), hvp_noise.len());
        assert!(!grad_noise.is_empty());
        for set in [&mut grad_noise, &mut hvp_noise] {
            let mean = linalg::mean_of(set);
            for v in set.iter_mut() {
                for (vi, m) in v.iter_mut().zip(&mean) {
                    *vi -= m;
                }
            }
        }
        self.grad_noise = grad_noise;
        self.hvp_noise = hvp_noise;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear(&self) -> &[f64] {
        &self.c
    }

    /// Minimizer `-A⁻¹c`.
    pub fn minimizer(&self) -> Vec<f64> {
        let sol = self
            .a
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&self.c))
            .expect("quadratic matrix is singular");
        sol.iter().map(|v| -v).collect()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let v = &self.a * nalgebra::DVector::from_column_slice(u);
        v.as_slice().to_vec()
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dot(x, &self.apply(x)) + linalg::dot(&self.c, x)
    }
}

impl Oracle for Quadratic {
    fn population(&self) -> usize {
        self.grad_noise.len()
    }
    fn add_sample_gradient(&self, x: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        let ax = self.apply(x);
        for (((o, a), c), e) in out.iter_mut().zip(&ax).zip(&self.c).zip(&self.grad_noise[z]) {
            *o += scale * (a + c + e);
        }
    }
    fn add_sample_hvp(&self, _x: &[f64], u: &[f64], z: usize, scale: f64, out: &mut [f64]) {
        let au = self.apply(u);
        for (((o, a), d), ui) in out.iter_mut().zip(&au).zip(&self.hvp_noise[z]).zip(u) {
            *o += scale * (a + d * ui);
        }
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.apply(x);
        linalg::axpy(1.0, &self.c, &mut g);
        g
    }
    fn hessian_vector(&self, _x: &[f64], u: &[f64]) -> Vec<f64> {
        self.apply(u)
    }
    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}
