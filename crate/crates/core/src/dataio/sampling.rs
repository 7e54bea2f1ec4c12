use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Uniform i.i.d. indices.
    #[default]
    WithReplacement,
    /// A single pass over a random permutation; the walk is shared by a fleet
    /// of samplers so that the fleet as a whole never repeats an index.
    SinglePass,
}

#[derive(Debug, Clone)]
enum Source {
    Uniform(Box<ChaCha8Rng>),
    Walk {
        order: Arc<[u32]>,
        offset: usize,
        stride: usize,
    },
}

/// Index stream over `0..count`, owned by exactly one simulated machine.
#[derive(Debug, Clone)]
pub struct Sampler {
    count: usize,
    draws: usize,
    source: Source,
}

impl Sampler {
    pub fn uniform(count: usize, seed: SeedPath) -> Self {
        assert!(count > 0, "sampler over an empty dataset");
        Sampler {
            count,
            draws: 0,
            source: Source::Uniform(Box::new(seed.rng())),
        }
    }

    /// Walks one random permutation of `0..count` without repetition.
    pub fn permutation(count: usize, seed: SeedPath) -> Self {
        Self::fleet(SamplingMode::SinglePass, count, seed, 1).remove(0)
    }

    /// `n` independent samplers derived from `seed`. In single-pass mode
    /// they interleave over one shared permutation (sampler `i` reads
    /// positions `i, i + n, i + 2n, ...`).
    pub fn fleet(mode: SamplingMode, count: usize, seed: SeedPath, n: usize) -> Vec<Self> {
        assert!(count > 0, "sampler over an empty dataset");
        match mode {
            SamplingMode::WithReplacement => (0..n)
                .map(|i| Self::uniform(count, seed.child(i as u64)))
                .collect(),
            SamplingMode::SinglePass => {
                let mut order: Vec<u32> = (0..count as u32).collect();
                order.shuffle(&mut seed.child(u64::MAX).rng());
                let order: Arc<[u32]> = order.into();
                (0..n)
                    .map(|i| Sampler {
                        count,
                        draws: 0,
                        source: Source::Walk {
                            order: Arc::clone(&order),
                            offset: i,
                            stride: n,
                        },
                    })
                    .collect()
            }
        }
    }

    pub fn draw(&mut self) -> Result<usize> {
        let idx = match &mut self.source {
            Source::Uniform(rng) => rng.random_range(0..self.count),
            Source::Walk {
                order,
                offset,
                stride,
            } => {
                let pos = *offset + self.draws * *stride;
                if pos >= order.len() {
                    return Err(Error::SamplerExhausted { draws: self.draws });
                }
                order[pos] as usize
            }
        };
        self.draws += 1;
        Ok(idx)
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_always_zero() {
        let mut s = Sampler::uniform(1, SeedPath::root(1));
        assert!((0..100).all(|_| s.draw().unwrap() == 0));
    }

    #[test]
    fn uniform_frequencies_within_three_sigma() {
        let n = 1_000_000;
        let mut s = Sampler::uniform(4, SeedPath::root(2024));
        let mut hits = [0usize; 4];
        for _ in 0..n {
            hits[s.draw().unwrap()] += 1;
        }
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for h in hits {
            let f = h as f64 / n as f64;
            assert!((f - 0.25).abs() <= 3.0 * sigma, "frequency {f}");
        }
        // chi-square with 3 dof; 11.34 is the 99% quantile
        let e = n as f64 / 4.0;
        let chi2: f64 = hits.iter().map(|&h| (h as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 11.34, "chi2 {chi2}");
    }

    #[test]
    fn permutation_walk_then_exhaustion() {
        let mut s = Sampler::permutation(4, SeedPath::root(5));
        let mut got: Vec<usize> = (0..4).map(|_| s.draw().unwrap()).collect();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3]);
        assert!(matches!(s.draw(), Err(Error::SamplerExhausted { draws: 4 })));
    }

    #[test]
    fn single_pass_fleet_never_repeats() {
        let mut fleet = Sampler::fleet(SamplingMode::SinglePass, 10, SeedPath::root(8), 3);
        let mut seen = Vec::new();
        for s in fleet.iter_mut() {
            while let Ok(i) = s.draw() {
                seen.push(i);
            }
        }
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let draw = |seed| {
            let mut s = Sampler::uniform(1000, SeedPath::root(seed).child(3));
            (0..50).map(|_| s.draw().unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
