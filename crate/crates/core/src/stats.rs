//! Small descriptive-statistics helpers shared across modules.

use ndarray::{ArrayView1, ArrayView2};

/// Linear-interpolation sample quantile (Hyndman–Fan type 7) of sorted data.
///
/// `sorted` must be non-empty and ascending; `p` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(values), 0.5)
}

/// `(q25, q75)` of the sample.
pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let s = sorted_copy(values);
    (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75))
}

pub fn iqr(values: &[f64]) -> f64 {
    let (a, b) = quartiles(values);
    b - a
}

pub fn mean(values: ArrayView1<f64>) -> f64 {
    values.sum() / values.len() as f64
}

/// Population standard deviation; returns 1 for a degenerate column so it can
/// be used directly as a scale.
pub fn scale_or_one(values: ArrayView1<f64>) -> f64 {
    let m = mean(values);
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
    let sd = v.sqrt();
    if sd > 1e-12 {
        sd
    } else {
        1.0
    }
}

/// Per-column `(mean, scale)` pairs.
pub fn column_moments(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    x.columns().into_iter().map(|c| (mean(c), scale_or_one(c))).unzip()
}

pub fn rmse(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> f64 {
    let n = pred.len() as f64;
    (pred.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt()
}
