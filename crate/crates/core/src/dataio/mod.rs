//! Sparse binary-classification datasets and sampling access.

mod libsvm;
mod sampling;
mod synthetic;

pub use libsvm::{parse_libsvm, read_libsvm, write_libsvm, LabelMode, ParseOptions};
pub use sampling::{Sampler, SamplingMode};
pub use synthetic::synthetic_logistic;

use crate::error::{Error, Result};

/// One labelled example with a sparse feature row.
///
/// Indices are 0-based, strictly increasing and unique; the label is exactly
/// `-1.0` or `+1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: f64,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: f64, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidParameter(format!("label {label} is not ±1")));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidParameter(
                "index and value arrays differ in length".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "feature indices must be strictly increasing".into(),
            ));
        }
        Ok(Sample {
            label,
            indices,
            values,
        })
    }
}

/// Borrowed view of one row of a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub label: f64,
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl Row<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| v * x[j as usize])
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += alpha * a`
    pub fn add_scaled(&self, alpha: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j as usize] += alpha * v;
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Immutable dataset in compressed-sparse-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    labels: Vec<f64>,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset; `dim` defaults to the largest feature index + 1 and
    /// may only be overridden upwards.
    pub fn from_samples(samples: Vec<Sample>, dim: Option<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let needed = samples
            .iter()
            .filter_map(|s| s.indices.last())
            .map(|&j| j as usize + 1)
            .max()
            .unwrap_or(0);
        let dim = match dim {
            Some(d) if d < needed => {
                return Err(Error::InvalidParameter(format!(
                    "dimension override {d} is below the largest feature index {needed}"
                )))
            }
            Some(d) => d,
            None => needed,
        };
        if dim == 0 {
            return Err(Error::InvalidParameter("dataset has no features".into()));
        }
        let nnz = samples.iter().map(|s| s.indices.len()).sum();
        let mut out = Dataset {
            dim,
            labels: Vec::with_capacity(samples.len()),
            indptr: Vec::with_capacity(samples.len() + 1),
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        };
        out.indptr.push(0);
        for s in samples {
            out.labels.push(s.label);
            out.indices.extend_from_slice(&s.indices);
            out.values.extend_from_slice(&s.values);
            out.indptr.push(out.indices.len());
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        Row {
            label: self.labels[i],
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.count()).map(move |i| self.row(i))
    }

    pub fn sample(&self, i: usize) -> Sample {
        let r = self.row(i);
        Sample {
            label: r.label,
            indices: r.indices.to_vec(),
            values: r.values.to_vec(),
        }
    }

    pub fn samples(&self) -> Vec<Sample> {
        (0..self.count()).map(|i| self.sample(i)).collect()
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows().map(|r| r.norm_sq()).fold(0.0, f64::max).sqrt()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&b| b > 0.0).count()
    }

    /// Deterministic head/tail split: rows `[0, n)` and `[n, count)`.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.count() {
            return Err(Error::InvalidParameter(format!(
                "split point {n} must lie strictly inside 0..{}",
                self.count()
            )));
        }
        let all = self.samples();
        let (head, tail) = all.split_at(n);
        Ok((
            Dataset::from_samples(head.to_vec(), Some(self.dim))?,
            Dataset::from_samples(tail.to_vec(), Some(self.dim))?,
        ))
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            count: self.count(),
            dim: self.dim,
            positives: self.positives(),
            negatives: self.count() - self.positives(),
            nnz: self.nnz(),
            max_row_norm: self.max_row_norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetSummary {
    pub count: usize,
    pub dim: usize,
    pub positives: usize,
    pub negatives: usize,
    pub nnz: usize,
    pub max_row_norm: f64,
}
