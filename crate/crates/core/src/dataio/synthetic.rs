use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Sample};
use crate::seed::SeedPath;

/// Dense Gaussian features with labels drawn from a planted logistic model.
///
/// Features are `N(0, 1/dim)` scaled by `feature_scale`; the planted weight
/// vector has i.i.d. `N(0, 1)` entries. Labels are Bernoulli, so the data is
/// not separable for moderate `count`.
pub fn synthetic_logistic(count: usize, dim: usize, feature_scale: f64, seed: u64) -> Dataset {
    let mut rng = SeedPath::root(seed).child(0x5_71e7).rng();
    let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let s = feature_scale / (dim as f64).sqrt();
    let samples = (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..dim)
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let t: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
            let p = 1.0 / (1.0 + (-t).exp());
            let label = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
            Sample {
                label,
                indices: (0..dim as u32).collect(),
                values: a,
            }
        })
        .collect();
    Dataset::from_samples(samples, Some(dim)).expect("synthetic dataset is well-formed")
}
