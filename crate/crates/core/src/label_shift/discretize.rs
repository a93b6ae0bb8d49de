use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::LabelShiftError;
use crate::stats::{quantile_sorted, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutProvenance {
    SourceQuantile,
    UserSupplied,
}

/// Partition of the outcome line into `L` categories by `L - 1` cut points.
///
/// Category `l` is `(cut[l-1], cut[l]]`, with the outer categories unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    cuts: Vec<f64>,
    provenance: CutProvenance,
}

impl Discretization {
    /// Cuts at the source quantiles `l / L`, `l = 1..L-1`.
    pub fn from_quantiles(y_source: ArrayView1<f64>, num_categories: usize) -> Result<Self, LabelShiftError> {
        if num_categories < 2 {
            return Err(LabelShiftError::Discretization(format!("need at least 2 categories, got {num_categories}")));
        }
        let sorted = sorted_copy(&y_source.to_vec());
        if sorted.is_empty() {
            return Err(LabelShiftError::Discretization("empty outcome vector".into()));
        }
        let cuts: Vec<f64> =
            (1..num_categories).map(|l| quantile_sorted(&sorted, l as f64 / num_categories as f64)).collect();
        if cuts.windows(2).any(|w| w[1] <= w[0]) || sorted[sorted.len() - 1] <= cuts[cuts.len() - 1] {
            return Err(LabelShiftError::Discretization(format!(
                "source outcomes are too tied for {num_categories} quantile categories; use a smaller L"
            )));
        }
        Ok(Self { cuts, provenance: CutProvenance::SourceQuantile })
    }

    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self, LabelShiftError> {
        if cuts.is_empty() || cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabelShiftError::Discretization("cut points must be finite and strictly increasing".into()));
        }
        Ok(Self { cuts, provenance: CutProvenance::UserSupplied })
    }

    pub fn num_categories(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn provenance(&self) -> CutProvenance {
        self.provenance
    }

    pub fn category(&self, y: f64) -> usize {
        self.cuts.partition_point(|&c| c < y)
    }

    pub fn categorize(&self, y: ArrayView1<f64>) -> Vec<usize> {
        y.iter().map(|&v| self.category(v)).collect()
    }

    pub fn counts(&self, y: ArrayView1<f64>) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories()];
        for c in self.categorize(y) {
            counts[c] += 1;
        }
        counts
    }
}

/// Largest `L` with `n / L² ≥ 5`, clamped to `[2, 10]`.
pub fn default_num_categories(n: usize) -> usize {
    let mut l = 2;
    while l < 10 && n as f64 / ((l + 1) * (l + 1)) as f64 >= 5.0 {
        l += 1;
    }
    l
}
