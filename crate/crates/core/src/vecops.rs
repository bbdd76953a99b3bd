//! Small dense-vector helpers. Parameter vectors in this crate are short
//! (a handful of components), so plain slices are used throughout.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm2_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| c * x).collect()
}

/// `y += c * x`
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Inverse-CDF draw from a discrete distribution given a uniform `u` in [0, 1).
/// Falls back to the last index with positive mass when rounding leaves `u`
/// above the cumulative total.
pub(crate) fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
