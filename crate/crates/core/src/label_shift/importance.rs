use log::warn;
use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::classifier::{prediction_mass, BlackBoxClassifier};
use super::discretize::Discretization;
use super::LabelShiftError;
use crate::cqls::{self, QpError, QpProblem};
use crate::splines::{rcs_basis, SplineSpec};

/// Condition number above which the confusion matrix is reported as near-singular.
pub const CONFUSION_CONDITION_WARN: f64 = 1e6;

/// Target prediction mass `μ̂` and source joint confusion proportions `Ĉ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStatistics {
    pub target_mass: Array1<f64>,
    /// `confusion[[i, j]]` = fraction of holdout rows predicted `i` with true category `j`.
    pub confusion: Array2<f64>,
}

impl ShiftStatistics {
    pub fn num_categories(&self) -> usize {
        self.target_mass.len()
    }

    /// 2-norm condition number of `Ĉ` (infinite when singular).
    pub fn confusion_condition(&self) -> f64 {
        let l = self.num_categories();
        let m = DMatrix::from_fn(l, l, |i, j| self.confusion[[i, j]]);
        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if smin <= 0.0 {
            f64::INFINITY
        } else {
            smax / smin
        }
    }
}

/// Confusion matrix on a labeled source holdout and prediction mass on the target.
pub fn shift_statistics(
    clf: &dyn BlackBoxClassifier,
    holdout_x: ArrayView2<f64>,
    holdout_categories: &[usize],
    target_x: ArrayView2<f64>,
) -> Result<ShiftStatistics, LabelShiftError> {
    if holdout_x.nrows() == 0 || holdout_x.nrows() != holdout_categories.len() {
        return Err(LabelShiftError::EmptyFold("source holdout fold".into()));
    }
    if target_x.nrows() == 0 {
        return Err(LabelShiftError::EmptyFold("target domain".into()));
    }
    let l = clf.num_categories();
    let preds = clf.predict(holdout_x);
    let mut confusion = Array2::zeros((l, l));
    for (&p, &y) in preds.iter().zip(holdout_categories) {
        confusion[[p, y]] += 1.0;
    }
    confusion /= preds.len() as f64;
    Ok(ShiftStatistics { target_mass: prediction_mass(clf, target_x), confusion })
}

/// Spline model of the continuous importance weight `β(y) = T(y) / S(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceModel {
    pub spline: SplineSpec,
    pub alpha: Array1<f64>,
    pub discretization: Discretization,
    /// `A α`: mean fitted weight of the source points in each category.
    pub category_means: Array1<f64>,
    /// Source category proportions `π`.
    pub source_proportions: Array1<f64>,
    pub epsilon: f64,
    /// Condition number of `Ĉ`; `None` when it is singular.
    pub confusion_condition: Option<f64>,
}

impl ImportanceModel {
    /// `πᵀ(Aα)`, the fitted estimate of `E_S[β(Y)]`.
    pub fn normalization(&self) -> f64 {
        self.source_proportions.dot(&self.category_means)
    }

    /// Model whose weight function is identically one.
    pub fn unit(spline: SplineSpec, discretization: Discretization, source_proportions: Array1<f64>) -> Self {
        let mut alpha = Array1::zeros(spline.basis_size());
        alpha[0] = 1.0;
        let l = discretization.num_categories();
        Self {
            spline,
            alpha,
            discretization,
            category_means: Array1::ones(l),
            source_proportions,
            epsilon: 0.0,
            confusion_condition: Some(1.0),
        }
    }
}

/// Per-category mean basis rows `A` (`L × M`) and source proportions `π`.
pub fn aggregation_matrix(
    spec: &SplineSpec,
    disc: &Discretization,
    y_source: ArrayView1<f64>,
) -> Result<(Array2<f64>, Array1<f64>), LabelShiftError> {
    let l = disc.num_categories();
    let basis = rcs_basis(spec, y_source);
    let cats = disc.categorize(y_source);
    let mut agg = Array2::zeros((l, spec.basis_size()));
    let mut counts = vec![0usize; l];
    for (row, &c) in basis.rows().into_iter().zip(&cats) {
        let mut target = agg.row_mut(c);
        target += &row;
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(LabelShiftError::MissingCategory { category: empty, num_categories: l });
    }
    for (mut row, &c) in agg.rows_mut().into_iter().zip(&counts) {
        row /= c as f64;
    }
    let n = y_source.len() as f64;
    let props = counts.iter().map(|&c| c as f64 / n).collect();
    Ok((agg, props))
}

/// Solves `min_α ‖μ̂ − Ĉ A α‖² + ρ‖α‖²` s.t. `A α ≥ 0`, `|πᵀ A α − 1| ≤ ε`.
pub fn fit_importance_model(
    stats: &ShiftStatistics,
    disc: &Discretization,
    spec: &SplineSpec,
    y_source: ArrayView1<f64>,
    epsilon: f64,
    ridge: f64,
) -> Result<ImportanceModel, LabelShiftError> {
    let l = disc.num_categories();
    if stats.num_categories() != l || stats.confusion.dim() != (l, l) {
        return Err(LabelShiftError::Discretization(format!(
            "statistics have {} categories, discretization has {l}",
            stats.num_categories()
        )));
    }
    let (agg, props) = aggregation_matrix(spec, disc, y_source)?;
    let m = spec.basis_size();
    let design = stats.confusion.dot(&agg);

    let mut g = Array2::zeros((l + 2, m));
    let mut h = Array1::zeros(l + 2);
    g.slice_mut(s![..l, ..]).assign(&agg);
    let pa = props.dot(&agg);
    g.row_mut(l).assign(&pa);
    g.row_mut(l + 1).assign(&(-&pa));
    h[l] = 1.0 - epsilon;
    h[l + 1] = -(1.0 + epsilon);

    let problem = QpProblem::least_squares(design, stats.target_mass.clone()).with_inequalities(g, h).with_ridge(ridge);
    let sol = cqls::solve(&problem).map_err(|e| match e {
        QpError::Infeasible { .. } => LabelShiftError::Infeasible { epsilon, num_categories: l },
        other => LabelShiftError::Qp(other),
    })?;

    let condition = stats.confusion_condition();
    if condition > CONFUSION_CONDITION_WARN {
        warn!("confusion matrix is near-singular (condition number {condition:.3e}); weights may be unreliable");
    }
    let category_means = agg.dot(&sol.z);
    Ok(ImportanceModel {
        spline: spec.clone(),
        alpha: sol.z,
        discretization: disc.clone(),
        category_means,
        source_proportions: props,
        epsilon,
        confusion_condition: condition.is_finite().then_some(condition),
    })
}

/// Pointwise `β̂(y) = max(0, Σ α_m q_m(y))`.
pub fn evaluate_weights(model: &ImportanceModel, y: ArrayView1<f64>) -> Array1<f64> {
    model.spline.evaluate(model.alpha.view(), y).mapv(|v| v.max(0.0))
}
