use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::LabelShiftError;
use crate::stats::column_moments;

/// Any probabilistic classifier over `L` outcome categories.
pub trait BlackBoxClassifier {
    fn num_categories(&self) -> usize;

    /// Row-wise class probabilities (`n × L`, rows sum to 1).
    fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64>;

    /// Arg-max class per row; ties go to the lowest class index.
    fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.predict_proba(x)
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (k, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Multinomial logistic regression on standardised features.
///
/// `coef` is `L × (p + 1)` with the intercept in column 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLogistic {
    pub coef: Array2<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Ridge on all coefficients (keeps the over-parameterised softmax identifiable).
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { l2: 1e-4, max_iter: 100, tol: 1e-9 }
    }
}

impl MultinomialLogistic {
    fn design(&self, x: ArrayView2<f64>) -> Array2<f64> {
        design(x, &self.feature_mean, &self.feature_scale)
    }

    /// Penalised mean cross-entropy on `(x, labels)`.
    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize], l2: f64) -> f64 {
        penalised_loss(&self.coef, &self.design(x), labels, l2)
    }
}

impl BlackBoxClassifier for MultinomialLogistic {
    fn num_categories(&self) -> usize {
        self.coef.nrows()
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(self.design(x).dot(&self.coef.t()))
    }
}

fn design(x: ArrayView2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut d = Array2::ones((n, p + 1));
    for j in 0..p {
        for i in 0..n {
            d[[i, j + 1]] = (x[[i, j]] - mean[j]) / scale[j];
        }
    }
    d
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    z
}

fn penalised_loss(coef: &Array2<f64>, design: &Array2<f64>, labels: &[usize], l2: f64) -> f64 {
    let z = design.dot(&coef.t());
    let n = labels.len() as f64;
    let mut ce = 0.0;
    for (row, &y) in z.rows().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        ce += lse - row[y];
    }
    ce / n + 0.5 * l2 * coef.iter().map(|v| v * v).sum::<f64>()
}

/// Fits the classifier by damped Newton iterations with backtracking.
///
/// Every category in `0..num_categories` must appear in `labels`.
pub fn fit_blackbox(
    x: ArrayView2<f64>,
    labels: &[usize],
    num_categories: usize,
    opts: LogisticOptions,
) -> Result<MultinomialLogistic, LabelShiftError> {
    let (n, p) = x.dim();
    if n == 0 || n != labels.len() {
        return Err(LabelShiftError::EmptyFold("classifier training fold".into()));
    }
    let mut present = vec![false; num_categories];
    for &l in labels {
        if l >= num_categories {
            return Err(LabelShiftError::Discretization(format!("label {l} outside 0..{num_categories}")));
        }
        present[l] = true;
    }
    if let Some(missing) = present.iter().position(|&b| !b) {
        return Err(LabelShiftError::MissingCategory { category: missing, num_categories });
    }

    let (feature_mean, feature_scale) = column_moments(x);
    let xd = design(x, &feature_mean, &feature_scale);
    let k = num_categories;
    let q = p + 1;
    let dim = k * q;
    let mut coef = Array2::<f64>::zeros((k, q));
    let mut loss = penalised_loss(&coef, &xd, labels, opts.l2);

    for _ in 0..opts.max_iter {
        let probs = softmax_rows(xd.dot(&coef.t()));
        // gradient, flattened class-major
        let mut resid = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            resid[[i, y]] -= 1.0;
        }
        let g_mat = resid.t().dot(&xd) / n as f64 + &coef * opts.l2;
        let grad = DVector::from_iterator(dim, g_mat.iter().copied());
        if grad.amax() < opts.tol {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            let xi = xd.row(i);
            let pi = probs.row(i);
            for a in 0..k {
                for b in a..k {
                    let w = if a == b { pi[a] * (1.0 - pi[a]) } else { -pi[a] * pi[b] } / n as f64;
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..q {
                        let wr = w * xi[r];
                        for c in 0..q {
                            hess[(a * q + r, b * q + c)] += wr * xi[c];
                        }
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                for r in 0..q {
                    for c in 0..q {
                        hess[(a * q + r, b * q + c)] = hess[(b * q + c, a * q + r)];
                    }
                }
            }
        }
        for d in 0..dim {
            hess[(d, d)] += opts.l2;
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let step = Array2::from_shape_vec((k, q), step.iter().copied().collect()).expect("k*q entries");
        let mut t = 1.0;
        let descent = grad.dot(&DVector::from_iterator(dim, step.iter().copied()));
        let mut accepted = false;
        while t > 1e-10 {
            let cand = &coef - &(&step * t);
            let l = penalised_loss(&cand, &xd, labels, opts.l2);
            if l <= loss - 1e-4 * t * descent {
                coef = cand;
                loss = l;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(MultinomialLogistic { coef, feature_mean, feature_scale })
}

/// Predicted-class mass per category.
pub fn prediction_mass(clf: &dyn BlackBoxClassifier, x: ArrayView2<f64>) -> Array1<f64> {
    let k = clf.num_categories();
    let preds = clf.predict(x);
    let mut mass = Array1::zeros(k);
    for p in &preds {
        mass[*p] += 1.0;
    }
    mass / preds.len() as f64
}
