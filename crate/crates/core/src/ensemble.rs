//! Multi-source ensembles of adapted learners.
//!
//! Every source `S_c` is adapted to every other source `S_r` with its labels
//! hidden, giving the cross-prediction block `(r, c)` of the stacking design
//! matrix; the diagonal blocks hold the in-sample no-DA learner. Stacking
//! weights regress the concatenated outcomes on that matrix over the simplex,
//! similarity weights use the inverse adapted losses `Ĵ_k`, and blended weights
//! interpolate the two. The final predictor combines the learners adapted
//! from each source to the target.

use std::ops::Range;

use log::warn;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::AdaptedLearner;
use crate::cqls::{self, QpProblem};
use crate::data::{DomainData, Features};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};
use crate::single_da::{run_single_da, SingleDaConfig, SingleDaResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Stack,
    Similarity,
    Blend,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "stack" => Ok(Scheme::Stack),
            "similarity" => Ok(Scheme::Similarity),
            "blend" => Ok(Scheme::Blend),
            other => Err(format!("unknown scheme `{other}` (expected stack, similarity or blend)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub single: SingleDaConfig,
    /// Append a constant column equal to the mean of all source outcomes.
    pub merged_mean_column: bool,
    /// Two-fold cross-fitted diagonal blocks instead of in-sample predictions.
    pub cross_fit_diagonal: bool,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { single: SingleDaConfig::default(), merged_mean_column: true, cross_fit_diagonal: false, seed: 0 }
    }
}

impl EnsembleConfig {
    fn run_config(&self, role: &str, idx: &[u64]) -> SingleDaConfig {
        SingleDaConfig { seed: derive_seed(self.seed, role, idx), ..self.single.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    /// No-DA learner of the same domain.
    Diagonal,
    /// Learner of column `c` adapted to row domain `r`.
    Adapted,
    /// Adaptation failed; the column's no-DA learner predicted instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub row: usize,
    pub col: usize,
    pub kind: CellKind,
    pub j_hat: f64,
    pub iterations: usize,
    pub note: Option<String>,
}

/// Cross-prediction design `Ŷ` and concatenated outcomes `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingMatrix {
    pub yhat: Array2<f64>,
    pub y: Array1<f64>,
    /// Rows of domain `r` in `yhat` and `y`.
    pub blocks: Vec<Range<usize>>,
    pub cells: Vec<CellInfo>,
    /// Value of the appended constant column, when present.
    pub merged_mean: Option<f64>,
}

impl StackingMatrix {
    pub fn num_sources(&self) -> usize {
        self.blocks.len()
    }

    /// Column count including the constant column.
    pub fn num_columns(&self) -> usize {
        self.yhat.ncols()
    }

    pub fn degraded(&self) -> impl Iterator<Item = &CellInfo> {
        self.cells.iter().filter(|c| c.kind == CellKind::Fallback)
    }
}

fn check_sources(sources: &[DomainData]) -> Result<()> {
    let first = sources.first().ok_or_else(|| Error::InvalidData("no source domains".into()))?;
    if sources.iter().any(|s| s.dim() != first.dim()) {
        return Err(Error::InvalidData("source domains differ in feature dimension".into()));
    }
    for (k, s) in sources.iter().enumerate() {
        if s.labels().is_none() {
            return Err(Error::InvalidData(format!("source domain {k} has no outcomes")));
        }
    }
    Ok(())
}

/// Adapts `learner_source` to the features of another domain; the other
/// domain's outcomes are not reachable from here.
pub fn adapt_pair(learner_source: &DomainData, data_domain: &Features, cfg: &SingleDaConfig) -> Result<SingleDaResult> {
    run_single_da(learner_source, data_domain, cfg)
}

/// No-DA learner of one source, plus its diagonal-block predictions.
fn diagonal(source: &DomainData, cfg: &EnsembleConfig, k: usize) -> Result<(SingleDaResult, Array1<f64>)> {
    let plain = cfg.run_config("diagonal", &[k as u64]).plain();
    let res = run_single_da(source, source.features(), &plain)?;
    let pred = if cfg.cross_fit_diagonal {
        cross_fitted(source, &plain, derive_seed(cfg.seed, "diagonal-folds", &[k as u64]))?
    } else {
        res.learner.predict(source.features().x())?
    };
    Ok((res, pred))
}

fn cross_fitted(source: &DomainData, plain: &SingleDaConfig, seed: u64) -> Result<Array1<f64>> {
    let n = source.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "folds", &[]));
    let (a, b) = order.split_at(n / 2);
    let x = source.features().x();
    let y = source.require_labels()?.y();
    let mut out = Array1::zeros(n);
    for (train, test) in [(a, b), (b, a)] {
        let part = DomainData::labeled(x.select(Axis(0), train), y.select(Axis(0), train))?;
        let res = run_single_da(&part, part.features(), plain)?;
        let pred = res.learner.predict(x.select(Axis(0), test).view())?;
        for (&i, p) in test.iter().zip(pred) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Builds the `K × K` block design (plus the optional constant column).
pub fn build_stacking_matrix(sources: &[DomainData], cfg: &EnsembleConfig) -> Result<StackingMatrix> {
    check_sources(sources)?;
    let diagonals = sources.par_iter().enumerate().map(|(k, s)| diagonal(s, cfg, k)).collect::<Result<Vec<_>>>()?;
    build_with_diagonals(sources, cfg, &diagonals)
}

fn build_with_diagonals(
    sources: &[DomainData],
    cfg: &EnsembleConfig,
    diagonals: &[(SingleDaResult, Array1<f64>)],
) -> Result<StackingMatrix> {
    let k = sources.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|r| (0..k).map(move |c| (r, c))).collect();
    let cells: Vec<(Array1<f64>, CellInfo)> = pairs
        .par_iter()
        .map(|&(r, c)| -> Result<(Array1<f64>, CellInfo)> {
            if r == c {
                let (res, pred) = &diagonals[c];
                let info = CellInfo {
                    row: r,
                    col: c,
                    kind: CellKind::Diagonal,
                    j_hat: res.j_hat(),
                    iterations: res.iterations,
                    note: None,
                };
                return Ok((pred.clone(), info));
            }
            let run_cfg = cfg.run_config("pair", &[r as u64, c as u64]);
            let data = sources[r].features();
            match adapt_pair(&sources[c], data, &run_cfg) {
                Ok(res) => {
                    let pred = res.learner.predict(data.x())?;
                    let info = CellInfo {
                        row: r,
                        col: c,
                        kind: CellKind::Adapted,
                        j_hat: res.j_hat(),
                        iterations: res.iterations,
                        note: res.degraded.clone(),
                    };
                    Ok((pred, info))
                }
                Err(e) => {
                    warn!("adapting source {c} to source {r} failed ({e}); using its no-DA learner");
                    let fallback = &diagonals[c].0;
                    let pred = fallback.learner.predict(data.x())?;
                    let info = CellInfo {
                        row: r,
                        col: c,
                        kind: CellKind::Fallback,
                        j_hat: fallback.j_hat(),
                        iterations: 0,
                        note: Some(e.to_string()),
                    };
                    Ok((pred, info))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut blocks = Vec::with_capacity(k);
    let mut start = 0;
    for s in sources {
        blocks.push(start..start + s.n());
        start += s.n();
    }
    let width = k + usize::from(cfg.merged_mean_column);
    let mut yhat = Array2::zeros((start, width));
    let mut infos = Vec::with_capacity(k * k);
    for ((pred, info), &(r, c)) in cells.into_iter().zip(&pairs) {
        yhat.slice_mut(s![blocks[r].clone(), c]).assign(&pred);
        infos.push(info);
    }
    let ys: Vec<ArrayView1<f64>> = sources.iter().map(|s| s.require_labels().map(|l| l.y())).collect::<Result<_>>()?;
    let y = concatenate(Axis(0), &ys).expect("1-d outcome vectors");
    let merged_mean = cfg.merged_mean_column.then(|| y.mean().expect("non-empty"));
    if let Some(m) = merged_mean {
        yhat.column_mut(k).fill(m);
    }
    Ok(StackingMatrix { yhat, y, blocks, cells: infos, merged_mean })
}

/// `argmin_{w ∈ simplex} ‖Y − Ŷ w‖²`.
pub fn stacking_weights(sm: &StackingMatrix) -> Result<Array1<f64>> {
    Ok(cqls::solve_simplex_ls(sm.yhat.view(), sm.y.view())?)
}

/// `w_k = (1/J_k) / Σ_l (1/J_l)`.
pub fn similarity_weights(j: &[f64]) -> Result<Array1<f64>> {
    if j.is_empty() {
        return Err(Error::InvalidData("no losses for similarity weights".into()));
    }
    if let Some(bad) = j.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidData(format!(
            "similarity weights need positive finite losses; source {bad} has J = {} (a perfect fit; add jitter)",
            j[bad]
        )));
    }
    let inv: Array1<f64> = j.iter().map(|v| 1.0 / v).collect();
    let total = inv.sum();
    Ok(inv / total)
}

/// `γ = max(w_sim) − min(w_sim)`.
pub fn blend_gamma(w_sim: ArrayView1<f64>) -> f64 {
    let max = w_sim.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = w_sim.fold(f64::INFINITY, |a, &b| a.min(b));
    max - min
}

/// Blended weights with the data-driven `γ`; returns `(w, γ)`.
///
/// When the stacking matrix has the constant column, `w_sim` (over the
/// sources) is extended with a zero for it.
pub fn blended_weights(sm: &StackingMatrix, w_sim: ArrayView1<f64>) -> Result<(Array1<f64>, f64)> {
    let gamma = blend_gamma(w_sim);
    Ok((blended_weights_with_gamma(sm, w_sim, gamma)?, gamma))
}

/// `argmin_{w ∈ simplex} (1−γ)‖Ŷw − Y‖² + γ‖w − w_sim‖²`.
pub fn blended_weights_with_gamma(sm: &StackingMatrix, w_sim: ArrayView1<f64>, gamma: f64) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let m = sm.num_columns();
    let target = extend_similarity(w_sim, m)?;
    if gamma == 0.0 {
        return stacking_weights(sm);
    }
    let n = sm.yhat.nrows();
    let (a, b) = ((1.0 - gamma).sqrt(), gamma.sqrt());
    let mut design = Array2::zeros((n + m, m));
    design.slice_mut(s![..n, ..]).assign(&(&sm.yhat * a));
    design.slice_mut(s![n.., ..]).assign(&(Array2::<f64>::eye(m) * b));
    let mut rhs = Array1::zeros(n + m);
    rhs.slice_mut(s![..n]).assign(&(&sm.y * a));
    rhs.slice_mut(s![n..]).assign(&(&target * b));
    if m == 1 {
        return Ok(Array1::ones(1));
    }
    let problem = QpProblem::simplex(design.view(), rhs.view());
    Ok(cqls::solve(&problem)?.z)
}

fn extend_similarity(w_sim: ArrayView1<f64>, m: usize) -> Result<Array1<f64>> {
    match m.checked_sub(w_sim.len()) {
        Some(0) => Ok(w_sim.to_owned()),
        Some(1) => Ok(concatenate(Axis(0), &[w_sim, Array1::zeros(1).view()]).expect("1-d")),
        _ => Err(Error::InvalidData(format!(
            "{} similarity weights for a stacking matrix with {m} columns",
            w_sim.len()
        ))),
    }
}

/// `Σ_k w_k G_y^k(G_f^k(x))` plus the optional constant learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub learners: Vec<AdaptedLearner>,
    /// One weight per learner, then one for `constant` when present.
    pub weights: Array1<f64>,
    pub constant: Option<f64>,
    pub scheme: Scheme,
    pub gamma: Option<f64>,
    /// Final `Ĵ_k` of each source-to-target run.
    pub j_hat: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl EnsembleModel {
    pub fn input_dim(&self) -> Option<usize> {
        self.learners.first().map(|l| l.predictor.input_dim())
    }

    /// Predictions of every component, one column each (constant last).
    pub fn component_predictions(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cols = self.learners.len() + usize::from(self.constant.is_some());
        let mut out = Array2::zeros((x.nrows(), cols));
        for (k, l) in self.learners.iter().enumerate() {
            out.column_mut(k).assign(&l.predict(x)?);
        }
        if let Some(c) = self.constant {
            out.column_mut(cols - 1).fill(c);
        }
        Ok(out)
    }
}

pub fn predict_ensemble(model: &EnsembleModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if let Some(p) = model.input_dim() {
        if x.ncols() != p {
            return Err(Error::InvalidData(format!("model expects {p} features, got {}", x.ncols())));
        }
    }
    let cols = model.component_predictions(x)?;
    if cols.ncols() != model.weights.len() {
        return Err(Error::InvalidData("weight vector does not match the model components".into()));
    }
    Ok(cols.dot(&model.weights))
}

/// Everything the three schemes need, computed once.
#[derive(Debug, Clone)]
pub struct EnsembleParts {
    pub target_runs: Vec<SingleDaResult>,
    pub stacking: Option<StackingMatrix>,
    pub merged_mean: Option<f64>,
}

impl EnsembleParts {
    pub fn j_hat(&self) -> Vec<f64> {
        self.target_runs.iter().map(|r| r.j_hat()).collect()
    }

    pub fn similarity(&self) -> Result<Array1<f64>> {
        similarity_weights(&self.j_hat())
    }

    pub fn model(&self, scheme: Scheme) -> Result<EnsembleModel> {
        let k = self.target_runs.len();
        let mut diagnostics: Vec<String> = self
            .target_runs
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.degraded.as_ref().map(|d| format!("source {i} to target: {d}")))
            .collect();
        let stacking = || {
            self.stacking
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{scheme:?} weights need the stacking matrix")))
        };
        let (weights, gamma, constant) = if k == 1 {
            (Array1::ones(1), None, None)
        } else {
            match scheme {
                Scheme::Similarity => (self.similarity()?, None, None),
                Scheme::Stack => (stacking_weights(stacking()?)?, None, self.merged_mean),
                Scheme::Blend => {
                    let (w, g) = blended_weights(stacking()?, self.similarity()?.view())?;
                    (w, Some(g), self.merged_mean)
                }
            }
        };
        if let Some(sm) = &self.stacking {
            diagnostics.extend(sm.degraded().map(|c| {
                format!("block ({}, {}) fell back to no-DA: {}", c.row, c.col, c.note.clone().unwrap_or_default())
            }));
        }
        Ok(EnsembleModel {
            learners: self.target_runs.iter().map(|r| r.learner.clone()).collect(),
            weights,
            constant,
            scheme,
            gamma,
            j_hat: self.j_hat(),
            diagnostics,
        })
    }
}

/// Source-to-target runs, plus the stacking matrix when `with_stacking`.
pub fn fit_parts(
    sources: &[DomainData],
    target: &Features,
    cfg: &EnsembleConfig,
    with_stacking: bool,
) -> Result<EnsembleParts> {
    check_sources(sources)?;
    if target.dim() != sources[0].dim() {
        return Err(Error::InvalidData("target and sources differ in feature dimension".into()));
    }
    let target_runs = sources
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            run_single_da(s, target, &cfg.run_config("target", &[k as u64]))
                .map_err(|e| e.context(format!("source {k} to target")))
        })
        .collect::<Result<Vec<_>>>()?;
    let stacking = if with_stacking && sources.len() > 1 { Some(build_stacking_matrix(sources, cfg)?) } else { None };
    let merged_mean = stacking.as_ref().and_then(|s| s.merged_mean);
    Ok(EnsembleParts { target_runs, stacking, merged_mean })
}

pub fn fit_target_ensemble(
    sources: &[DomainData],
    target: &Features,
    scheme: Scheme,
    cfg: &EnsembleConfig,
) -> Result<EnsembleModel> {
    fit_parts(sources, target, cfg, scheme != Scheme::Similarity)?.model(scheme)
}
