//! Small dense-vector helpers. Parameter vectors are plain `[f64]` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Mean of equally sized vectors. Each coordinate is reduced in ascending
/// value order as `min + mean(v - min)`, so the result is bit-identical
/// under any permutation of `vectors` and exact when all entries agree.
pub fn mean_of<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<f64> {
    let d = vectors.first().map_or(0, |v| v.as_ref().len());
    let inv = 1.0 / vectors.len() as f64;
    let mut column = Vec::with_capacity(vectors.len());
    (0..d)
        .map(|j| {
            column.clear();
            column.extend(vectors.iter().map(|v| v.as_ref()[j]));
            column.sort_unstable_by(f64::total_cmp);
            let low = column[0];
            low + column.iter().map(|v| v - low).sum::<f64>() * inv
        })
        .collect()
}
