#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use fedsn_core::dataio::{read_libsvm, synthetic_logistic};
use fedsn_core::linalg;
use fedsn_core::quadcore::{QuadSubproblem, Schedule};
use fedsn_core::{Dataset, GlmProblem, Oracle, ParseOptions, RunSpec, Sample};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect()
}

pub fn dense_dataset(rows: &[(f64, &[f64])]) -> Dataset {
    let samples = rows
        .iter()
        .map(|(label, a)| {
            let (idx, vals): (Vec<u32>, Vec<f64>) = a
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j as u32, *v))
                .unzip();
            Sample::new(*label, idx, vals).unwrap()
        })
        .collect();
    Dataset::from_samples(samples, Some(rows[0].1.len())).unwrap()
}

/// Sparse random rows with roughly `density` nonzeros per coordinate.
pub fn random_dataset(rng: &mut ChaCha8Rng, count: usize, dim: usize, density: f64) -> Dataset {
    let samples = (0..count)
        .map(|_| {
            let mut idx = Vec::new();
            let mut vals = Vec::new();
            for j in 0..dim {
                if rng.random::<f64>() < density {
                    idx.push(j as u32);
                    vals.push(rng.random_range(-2.0..2.0));
                }
            }
            let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Sample::new(label, idx, vals).unwrap()
        })
        .collect();
    Dataset::from_samples(samples, Some(dim)).unwrap()
}

pub fn problem(ds: Dataset, mu: f64) -> GlmProblem {
    GlmProblem::new(Arc::new(ds), mu).unwrap()
}

pub fn synthetic_problem(count: usize, dim: usize, mu: f64, seed: u64) -> GlmProblem {
    problem(synthetic_logistic(count, dim, 1.0, seed), mu)
}

fn dense_row(ds: &Dataset, i: usize) -> (f64, Vec<f64>) {
    let s = ds.sample(i);
    let mut a = vec![0.0; ds.dim()];
    for (j, v) in s.indices.iter().zip(&s.values) {
        a[*j as usize] = *v;
    }
    (s.label, a)
}

/// `(1/n) Σ -b_i σ(-b_i a_i'x) a_i + mu x`, built from the raw rows.
pub fn dense_gradient(p: &GlmProblem, x: &[f64]) -> Vec<f64> {
    let ds = p.dataset();
    let mut g: Vec<f64> = x.iter().map(|v| p.mu() * v).collect();
    for i in 0..ds.count() {
        let (b, a) = dense_row(ds, i);
        let c = -b / (1.0 + (b * linalg::dot(&a, x)).exp()) / ds.count() as f64;
        linalg::axpy(c, &a, &mut g);
    }
    g
}

/// `(1/n) Σ s_i (a_i'u) a_i + mu u`, built from the raw rows.
pub fn dense_hvp(p: &GlmProblem, x: &[f64], u: &[f64]) -> Vec<f64> {
    let ds = p.dataset();
    let mut h = DMatrix::<f64>::zeros(ds.dim(), ds.dim());
    for i in 0..ds.count() {
        let (b, a) = dense_row(ds, i);
        let t = b * linalg::dot(&a, x);
        let sig = 1.0 / (1.0 + (-t).exp());
        let w = sig * (1.0 - sig);
        for r in 0..a.len() {
            for c in 0..a.len() {
                h[(r, c)] += w * a[r] * a[c];
            }
        }
    }
    h /= ds.count() as f64;
    let hu = &h * nalgebra::DVector::from_column_slice(u);
    hu.iter().zip(u).map(|(v, ui)| v + p.mu() * ui).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    linalg::dist(a, b) / linalg::norm(b).max(1e-300)
}

/// Central difference of the gradient along `u`.
pub fn fd_hvp<O: Oracle>(o: &O, x: &[f64], u: &[f64], eps: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    linalg::axpy(eps, u, &mut xp);
    linalg::axpy(-eps, u, &mut xm);
    let gp = o.gradient(&xp);
    let gm = o.gradient(&xm);
    gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
}

/// Plain SGD `x ← x - η g(x; z)` over the first stream of `spec`, logging
/// the metric every `log_every` steps.
pub fn sequential_sgd<O: Oracle>(
    o: &O,
    x0: &[f64],
    eta: f64,
    spec: &RunSpec,
    steps: usize,
    log_every: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut s = spec.samplers(o.population(), 0).remove(0);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut traj = vec![o.value(&x)];
    for t in 0..steps {
        g.fill(0.0);
        o.add_sample_gradient(&x, s.draw().unwrap(), 1.0, &mut g);
        for j in 0..x.len() {
            x[j] -= eta * g[j];
        }
        if (t + 1) % log_every == 0 {
            traj.push(o.value(&x));
        }
    }
    (x, traj)
}

/// Local SGD without any momentum term.
pub fn plain_local_sgd<O: Oracle>(o: &O, x0: &[f64], eta: f64, spec: &RunSpec) -> (Vec<f64>, Vec<f64>) {
    let mut streams = spec.samplers(o.population(), 0);
    let mut x = x0.to_vec();
    let mut traj = vec![o.value(&x)];
    for _ in 0..spec.rounds {
        let mut locals = Vec::new();
        for s in streams.iter_mut() {
            let mut xm = x.clone();
            let mut g = vec![0.0; x.len()];
            for _ in 0..spec.steps {
                g.fill(0.0);
                o.add_sample_gradient(&xm, s.draw().unwrap(), 1.0, &mut g);
                for j in 0..xm.len() {
                    xm[j] -= eta * g[j];
                }
            }
            locals.push(xm);
        }
        x = linalg::mean_of(&locals);
        traj.push(o.value(&x));
    }
    (x, traj)
}

/// Minibatch SGD without any momentum term.
pub fn plain_minibatch_sgd<O: Oracle>(o: &O, x0: &[f64], eta: f64, spec: &RunSpec) -> (Vec<f64>, Vec<f64>) {
    let mut streams = spec.samplers(o.population(), 0);
    let mut x = x0.to_vec();
    let mut traj = vec![o.value(&x)];
    for _ in 0..spec.rounds {
        let mut props = Vec::new();
        for s in streams.iter_mut() {
            let mut g = vec![0.0; x.len()];
            for _ in 0..spec.steps {
                o.add_sample_gradient(&x, s.draw().unwrap(), 1.0, &mut g);
            }
            linalg::scale(1.0 / spec.steps as f64, &mut g);
            props.push(x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect::<Vec<_>>());
        }
        x = linalg::mean_of(&props);
        traj.push(o.value(&x));
    }
    (x, traj)
}

/// One-shot averaged SGD on `Q_λ` without any momentum term.
pub fn plain_quadratic_solver<O: Oracle>(
    sub: &QuadSubproblem<'_, O>,
    schedule: &Schedule,
    streams: &mut [fedsn_core::Sampler],
) -> Vec<f64> {
    let d = sub.base().len();
    let k = schedule.steps();
    let weights: Vec<f64> = (0..k).map(|i| schedule.w_k(i).unwrap()).collect();
    let wsum: f64 = weights.iter().sum();
    let mut accs = Vec::new();
    for s in streams.iter_mut() {
        let mut u = vec![0.0; d];
        let mut acc = vec![0.0; d];
        let mut gamma = vec![0.0; d];
        for (i, &w) in weights.iter().enumerate() {
            sub.gradient_access_into(&u, s, &mut gamma).unwrap();
            let eta = schedule.eta_k(i).unwrap();
            for j in 0..d {
                u[j] -= eta * gamma[j];
            }
            if w != 0.0 {
                linalg::axpy(w, &u, &mut acc);
            }
        }
        accs.push(acc);
    }
    let mut total = linalg::mean_of(&accs);
    linalg::scale(1.0 / wsum, &mut total);
    total
}

/// FedSN-Lite with a momentum-free inner solver.
pub fn plain_lite<O: Oracle>(o: &O, x0: &[f64], eta: f64, nu: f64, spec: &RunSpec) -> (Vec<f64>, Vec<f64>) {
    use fedsn_core::quadcore::OracleCase;
    let schedule = Schedule::constant(eta, spec.steps).unwrap();
    let mut streams = spec.samplers(o.population(), 1);
    let mut coord = streams.pop().unwrap();
    let mut x = x0.to_vec();
    let mut traj = vec![o.value(&x)];
    for _ in 0..spec.rounds {
        let sub = QuadSubproblem::new(o, &x, 1.0, 0.0, OracleCase::SameSample).unwrap();
        let u = plain_quadratic_solver(&sub, &schedule, &mut streams);
        let s = o.sample_curvature(&x, &u, coord.draw().unwrap());
        let step = nu / (1.0 + s.max(0.0).sqrt());
        linalg::axpy(step, &u, &mut x);
        traj.push(o.value(&x));
    }
    (x, traj)
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// a9a from `$FEDSN_A9A` or `data/a9a` at the workspace root.
pub fn a9a_path() -> Option<PathBuf> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let candidates = [
        std::env::var_os("FEDSN_A9A").map(PathBuf::from),
        Some(root.join("data/a9a")),
        Some(root.join("data/a9a.gz")),
    ];
    candidates.into_iter().flatten().find(|p| p.is_file())
}

pub fn load_a9a() -> Result<Dataset, String> {
    let path = a9a_path().ok_or("a9a not found (set FEDSN_A9A or place it at data/a9a)")?;
    // a9a has 123 features; the last one is absent from some splits
    let opts = ParseOptions {
        dim: Some(123),
        ..Default::default()
    };
    read_libsvm(&path, &opts).map_err(|e| format!("{}: {e}", path.display()))
}
