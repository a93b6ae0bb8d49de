use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::cqls;
use crate::data::{DomainData, Features};
use crate::error::{Error, Result};
use crate::single_da::{run_single_da, SingleDaConfig};

/// Intercept, the raw columns, and their squares when `quadratic`.
pub fn design_matrix(x: ArrayView2<f64>, quadratic: bool) -> Array2<f64> {
    let (n, p) = x.dim();
    let width = 1 + p * if quadratic { 2 } else { 1 };
    Array2::from_shape_fn((n, width), |(i, j)| match j {
        0 => 1.0,
        j if j <= p => x[[i, j - 1]],
        j => x[[i, j - 1 - p]].powi(2),
    })
}

/// Linear model on [`design_matrix`] features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Array1<f64>,
    pub quadratic: bool,
}

impl LinearFit {
    /// Weighted least squares; `weights = None` is ordinary least squares.
    pub fn fit(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        weights: Option<ArrayView1<f64>>,
        quadratic: bool,
    ) -> Result<Self> {
        let d = design_matrix(x, quadratic);
        let (n, m) = d.dim();
        if y.len() != n {
            return Err(Error::InvalidData("design rows and outcomes differ".into()));
        }
        if let Some(w) = weights {
            if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidData("weights must be finite, non-negative, one per row".into()));
            }
        }
        let root = |i: usize| weights.map_or(1.0, |w| w[i].sqrt());
        let a = DMatrix::from_fn(n, m, |i, j| root(i) * d[[i, j]]);
        let b = DVector::from_fn(n, |i, _| root(i) * y[i]);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if n < m || smin <= smax * 1e-10 {
            return Err(Error::SingularDesign(format!(
                "{n} rows, {m} columns, singular value ratio {:.1e}",
                if smax > 0.0 { smin / smax } else { 0.0 }
            )));
        }
        let coef = svd.solve(&b, 0.0).map_err(|e| Error::SingularDesign(e.to_string()))?;
        Ok(Self { coef: coef.iter().copied().collect(), quadratic })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let d = design_matrix(x, self.quadratic);
        if d.ncols() != self.coef.len() {
            return Err(Error::InvalidData("feature dimension differs from the fitted model".into()));
        }
        Ok(d.dot(&self.coef))
    }
}

/// OLS on the concatenated sources, predicted on the target.
pub fn merged_ols(sources: &[DomainData], target: &Features, quadratic: bool) -> Result<Array1<f64>> {
    let merged = DomainData::concat(sources)?;
    let fit = LinearFit::fit(merged.features().x(), merged.require_labels()?.y(), None, quadratic)?;
    fit.predict(target.x())
}

/// Weighted least squares on one source.
pub fn wls(source: &DomainData, target: &Features, weights: ArrayView1<f64>, quadratic: bool) -> Result<Array1<f64>> {
    let fit = LinearFit::fit(source.features().x(), source.require_labels()?.y(), Some(weights), quadratic)?;
    fit.predict(target.x())
}

/// Per-source OLS combined with simplex stacking weights fitted on the
/// cross-prediction matrix; returns target predictions and the weights.
pub fn stack_ols(sources: &[DomainData], target: &Features, quadratic: bool) -> Result<(Array1<f64>, Array1<f64>)> {
    let fits = sources
        .iter()
        .map(|s| LinearFit::fit(s.features().x(), s.require_labels()?.y(), None, quadratic))
        .collect::<Result<Vec<_>>>()?;
    let merged = DomainData::concat(sources)?;
    let x = merged.features().x();
    let mut yhat = Array2::zeros((merged.n(), fits.len()));
    for (k, f) in fits.iter().enumerate() {
        yhat.column_mut(k).assign(&f.predict(x)?);
    }
    let w = cqls::solve_simplex_ls(yhat.view(), merged.require_labels()?.y())?;
    let xt = target.x();
    let mut pred = Array1::zeros(target.n());
    for (f, &wk) in fits.iter().zip(&w) {
        pred.scaled_add(wk, &f.predict(xt)?);
    }
    Ok((pred, w))
}

/// Single-source adaptation run on the merged sources.
pub fn merge_da(sources: &[DomainData], target: &Features, cfg: &SingleDaConfig) -> Result<Array1<f64>> {
    let merged = if sources.len() == 1 { sources[0].clone() } else { DomainData::concat(sources)? };
    let res = run_single_da(&merged, target, cfg)?;
    Ok(res.learner.predict(target.x())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn noiseless_line_is_recovered() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = x.column(0).mapv(|v| 2.0 - 0.5 * v);
        let src = DomainData::labeled(x, y).unwrap();
        let tgt = Features::new(array![[10.0], [-4.0]]).unwrap();
        let p = merged_ols(&[src], &tgt, false).unwrap();
        assert!((p[0] + 3.0).abs() < 1e-8 && (p[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn matches_normal_equations() {
        let x = array![[0.3, 1.0], [1.2, -0.4], [2.5, 0.8], [-1.0, 2.2], [0.7, 0.1], [1.9, -1.3]];
        let y = array![1.0, 0.2, 3.1, -0.5, 0.9, 1.4];
        let fit = LinearFit::fit(x.view(), y.view(), None, true).unwrap();
        let d = design_matrix(x.view(), true);
        let dm = DMatrix::from_fn(6, 5, |i, j| d[[i, j]]);
        let rhs = dm.transpose() * DVector::from_iterator(6, y.iter().copied());
        let oracle = (dm.transpose() * &dm).lu().solve(&rhs).unwrap();
        for (a, b) in fit.coef.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let x = array![[0.3], [1.2], [2.5], [-1.0], [0.7]];
        let y = array![1.0, 0.2, 3.1, -0.5, 0.9];
        let a = LinearFit::fit(x.view(), y.view(), None, false).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let xp = x.select(ndarray::Axis(0), &perm);
        let yp = y.select(ndarray::Axis(0), &perm);
        let b = LinearFit::fit(xp.view(), yp.view(), None, false).unwrap();
        assert!((&a.coef - &b.coef).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn weighted_fit_by_hand() {
        // three points, weights (1, 2, 1): closed-form weighted normal equations
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![0.0, 2.0, 1.0];
        let w = array![1.0, 2.0, 1.0];
        let fit = LinearFit::fit(x.view(), y.view(), Some(w.view()), false).unwrap();
        // Σw=4, Σwx=4, Σwx²=6, Σwy=5, Σwxy=6 → [4 4; 4 6] c = [5; 6]
        let (b1, b0) = ((6.0 - 5.0) / 2.0, (5.0 - 4.0 * 0.5) / 4.0);
        assert!((fit.coef[0] - b0).abs() < 1e-12 && (fit.coef[1] - b1).abs() < 1e-12);
        let ones = Array1::ones(3);
        let plain = LinearFit::fit(x.view(), y.view(), None, false).unwrap();
        let unit = LinearFit::fit(x.view(), y.view(), Some(ones.view()), false).unwrap();
        assert!((&plain.coef - &unit.coef).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn singular_design_is_reported() {
        let x = array![[1.0], [1.0], [1.0]];
        let y = array![0.0, 1.0, 2.0];
        assert!(matches!(LinearFit::fit(x.view(), y.view(), None, false), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn single_source_stack_is_plain_ols() {
        let x = array![[0.3], [1.2], [2.5], [-1.0], [0.7]];
        let y = array![1.0, 0.2, 3.1, -0.5, 0.9];
        let src = DomainData::labeled(x, y).unwrap();
        let tgt = Features::new(array![[0.0], [1.0]]).unwrap();
        let (p, w) = stack_ols(std::slice::from_ref(&src), &tgt, false).unwrap();
        assert_eq!(w, array![1.0]);
        assert_eq!(p, merged_ols(&[src], &tgt, false).unwrap());
    }
}
