//! Black-box shift estimation for continuous outcomes.
//!
//! Outcomes are coarsened into `L` categories, a classifier trained on one
//! half of the source predicts categories, its confusion matrix on the other
//! half and its prediction mass on the target give a linear system for the
//! per-category weights, and the continuous weight function is a restricted
//! cubic spline whose per-category means solve that system under
//! non-negativity and normalisation constraints.

mod classifier;
mod discretize;
mod importance;

pub use classifier::{fit_blackbox, prediction_mass, BlackBoxClassifier, LogisticOptions, MultinomialLogistic};
pub use discretize::{default_num_categories, CutProvenance, Discretization};
pub use importance::{
    aggregation_matrix, evaluate_weights, fit_importance_model, shift_statistics, ImportanceModel, ShiftStatistics,
    CONFUSION_CONDITION_WARN,
};

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cqls::QpError;
use crate::seed::rng_for;
use crate::splines::{knots_from_quantiles, SplineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelShiftError {
    #[error("discretization: {0}")]
    Discretization(String),
    #[error("category {category} of {num_categories} has no observations; use a smaller L")]
    MissingCategory { category: usize, num_categories: usize },
    #[error("empty {0}")]
    EmptyFold(String),
    #[error("weight constraints are infeasible at epsilon = {epsilon} with L = {num_categories}; try a larger epsilon or a smaller L")]
    Infeasible { epsilon: f64, num_categories: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Settings for one run of the extended BBSE procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BbseConfig {
    /// Category count `L`; `None` uses [`default_num_categories`].
    pub num_categories: Option<usize>,
    /// Explicit cut points; override `num_categories` when present.
    pub cut_points: Option<Vec<f64>>,
    pub num_knots: usize,
    pub epsilon: f64,
    pub ridge: f64,
    /// Fraction of the source used to train the classifier.
    pub train_fraction: f64,
    pub classifier_l2: f64,
}

impl Default for BbseConfig {
    fn default() -> Self {
        Self {
            num_categories: None,
            cut_points: None,
            num_knots: 12,
            epsilon: 0.05,
            ridge: 1e-8,
            train_fraction: 0.5,
            classifier_l2: 1e-4,
        }
    }
}

impl BbseConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_knots < 3 {
            return Err("num_knots must be at least 3".into());
        }
        if !(self.epsilon >= 0.0) {
            return Err("epsilon must be non-negative".into());
        }
        if !(self.ridge >= 0.0) {
            return Err("ridge must be non-negative".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err("train_fraction must lie in (0, 1)".into());
        }
        if matches!(self.num_categories, Some(l) if l < 2) {
            return Err("num_categories must be at least 2".into());
        }
        Ok(())
    }

    pub fn discretization(&self, y_source: ArrayView1<f64>) -> Result<Discretization, LabelShiftError> {
        match &self.cut_points {
            Some(cuts) => Discretization::from_cuts(cuts.clone()),
            None => {
                let l = self.num_categories.unwrap_or_else(|| default_num_categories(y_source.len()));
                Discretization::from_quantiles(y_source, l)
            }
        }
    }
}

/// Everything produced by one extended-BBSE run.
#[derive(Debug, Clone)]
pub struct BbseFit {
    pub model: ImportanceModel,
    pub statistics: ShiftStatistics,
    pub classifier: MultinomialLogistic,
    /// Pointwise weights at the source outcomes.
    pub weights: Array1<f64>,
}

/// Seeded split, classifier fit, shift statistics and constrained spline fit.
pub fn estimate_importance(
    source_x: ArrayView2<f64>,
    y_source: ArrayView1<f64>,
    target_x: ArrayView2<f64>,
    cfg: &BbseConfig,
    seed: u64,
) -> Result<BbseFit, LabelShiftError> {
    let n = y_source.len();
    if n < 4 || source_x.nrows() != n {
        return Err(LabelShiftError::EmptyFold("source domain".into()));
    }
    let disc = cfg.discretization(y_source)?;
    let l = disc.num_categories();
    let categories = disc.categorize(y_source);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "bbse-split", &[]));
    let n_train = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, hold_idx) = order.split_at(n_train);

    let train_x = source_x.select(Axis(0), train_idx);
    let train_c: Vec<usize> = train_idx.iter().map(|&i| categories[i]).collect();
    let opts = LogisticOptions { l2: cfg.classifier_l2, ..LogisticOptions::default() };
    let classifier = fit_blackbox(train_x.view(), &train_c, l, opts)?;

    let hold_x = source_x.select(Axis(0), hold_idx);
    let hold_c: Vec<usize> = hold_idx.iter().map(|&i| categories[i]).collect();
    let statistics = shift_statistics(&classifier, hold_x.view(), &hold_c, target_x)?;

    let spec = knots_from_quantiles(y_source, cfg.num_knots)?;
    let model = fit_importance_model(&statistics, &disc, &spec, y_source, cfg.epsilon, cfg.ridge)?;
    let weights = evaluate_weights(&model, y_source);
    Ok(BbseFit { model, statistics, classifier, weights })
}
