//! Restricted (natural) cubic spline basis in Harrell's truncated-power form.
//!
//! For knots `t_1 < ... < t_J` the basis has `J` columns: an intercept, the
//! linear term, and `J - 2` nonlinear terms
//!
//! ```text
//! C_j(y) = [ (y - t_j)+^3
//!          - (y - t_{J-1})+^3 (t_J - t_j) / (t_J - t_{J-1})
//!          + (y - t_J)+^3   (t_{J-1} - t_j) / (t_J - t_{J-1}) ] / (t_J - t_1)^2
//! ```
//!
//! Each `C_j` vanishes left of `t_j` and is linear right of `t_J`.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{quantile_sorted, sorted_copy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("outcome has {distinct} distinct values but {requested} knots were requested; use fewer knots")]
    TooFewDistinct { distinct: usize, requested: usize },
    #[error("a restricted cubic spline needs at least 3 knots (got {0})")]
    TooFewKnots(usize),
    #[error("knots must be finite and strictly increasing")]
    UnorderedKnots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineSpecDocument", into = "SplineSpecDocument")]
pub struct SplineSpec {
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SplineSpecDocument {
    knots: Vec<f64>,
}

impl From<SplineSpec> for SplineSpecDocument {
    fn from(s: SplineSpec) -> Self {
        Self { knots: s.knots }
    }
}

impl TryFrom<SplineSpecDocument> for SplineSpec {
    type Error = SplineError;
    fn try_from(d: SplineSpecDocument) -> Result<Self, SplineError> {
        SplineSpec::new(d.knots)
    }
}

impl SplineSpec {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 3 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::UnorderedKnots);
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis columns (equals the knot count).
    pub fn basis_size(&self) -> usize {
        self.knots.len()
    }

    /// Nonlinear term `C_j` (0-based `j < J - 2`) at a single point.
    fn nonlinear_term(&self, j: usize, y: f64) -> f64 {
        let t = &self.knots;
        let jj = t.len();
        let (t_last, t_pen) = (t[jj - 1], t[jj - 2]);
        let norm = (t_last - t[0]).powi(2);
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        let span = t_last - t_pen;
        (cube(y - t[j]) - cube(y - t_pen) * (t_last - t[j]) / span + cube(y - t_last) * (t_pen - t[j]) / span) / norm
    }

    /// Basis row for one outcome value.
    pub fn basis_row(&self, y: f64) -> Array1<f64> {
        let m = self.basis_size();
        let mut row = Array1::zeros(m);
        row[0] = 1.0;
        row[1] = y;
        for j in 0..m - 2 {
            row[2 + j] = self.nonlinear_term(j, y);
        }
        row
    }

    /// `Σ_m α_m q_m(y)` at each `y`.
    pub fn evaluate(&self, alpha: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        rcs_basis(self, y).dot(&alpha)
    }
}

/// Knots at the empirical quantiles of `y_source` with levels `k / (J + 1)`,
/// `k = 1..=J` (type-7 interpolation). Coincident knots from heavy ties are
/// collapsed with a warning, so the returned spec may have fewer than `J` knots.
pub fn knots_from_quantiles(y_source: ArrayView1<f64>, num_knots: usize) -> Result<SplineSpec, SplineError> {
    if num_knots < 3 {
        return Err(SplineError::TooFewKnots(num_knots));
    }
    let sorted = sorted_copy(&y_source.to_vec());
    let distinct = count_distinct(&sorted);
    if distinct < num_knots {
        return Err(SplineError::TooFewDistinct { distinct, requested: num_knots });
    }
    let levels = (1..=num_knots).map(|k| k as f64 / (num_knots + 1) as f64);
    let mut knots: Vec<f64> = Vec::with_capacity(num_knots);
    for p in levels {
        let q = quantile_sorted(&sorted, p);
        match knots.last() {
            Some(&last) if q <= last => {}
            _ => knots.push(q),
        }
    }
    if knots.len() < num_knots {
        warn!("tied outcomes collapsed {num_knots} quantile knots to {}", knots.len());
    }
    SplineSpec::new(knots)
}

fn count_distinct(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Basis matrix `n × J`: intercept, linear term, then the restricted cubic terms.
pub fn rcs_basis(spec: &SplineSpec, y: ArrayView1<f64>) -> Array2<f64> {
    let m = spec.basis_size();
    let mut out = Array2::zeros((y.len(), m));
    for (mut row, &v) in out.rows_mut().into_iter().zip(y.iter()) {
        row.assign(&spec.basis_row(v));
    }
    out
}
