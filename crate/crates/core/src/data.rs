//! Domain data containers.
//!
//! Feature matrices and outcome vectors are wrapped so that every read goes
//! through a counted accessor. The counters let tests and the simulation
//! harness prove which components touched which outcomes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::{Error, Result};

#[derive(Debug, Default)]
struct ReadCounter(AtomicUsize);

impl ReadCounter {
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

/// Feature matrix of one domain (rows are observations).
///
/// Clones share the underlying storage and the read counter.
#[derive(Debug, Clone)]
pub struct Features {
    x: Arc<Array2<f64>>,
    reads: Arc<ReadCounter>,
}

impl Features {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("feature matrix contains non-finite values".into()));
        }
        Ok(Self { x: Arc::new(x), reads: Arc::default() })
    }

    /// Counted read access.
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.reads.bump();
        self.x.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of times [`Features::x`] has been called on any clone.
    pub fn read_count(&self) -> usize {
        self.reads.get()
    }
}

/// Outcome vector of one domain.
#[derive(Debug, Clone)]
pub struct Labels {
    y: Arc<Array1<f64>>,
    reads: Arc<ReadCounter>,
}

impl Labels {
    pub fn new(y: Array1<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("outcome vector contains non-finite values".into()));
        }
        Ok(Self { y: Arc::new(y), reads: Arc::default() })
    }

    /// Counted read access.
    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.reads.bump();
        self.y.view()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn read_count(&self) -> usize {
        self.reads.get()
    }
}

/// Features plus optional outcomes for a single domain.
#[derive(Debug, Clone)]
pub struct DomainData {
    features: Features,
    labels: Option<Labels>,
}

impl DomainData {
    pub fn labeled(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "feature rows ({}) and outcome length ({}) differ",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { features: Features::new(x)?, labels: Some(Labels::new(y)?) })
    }

    pub fn unlabeled(x: Array2<f64>) -> Result<Self> {
        Ok(Self { features: Features::new(x)?, labels: None })
    }

    pub fn from_parts(features: Features, labels: Option<Labels>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.n() {
                return Err(Error::InvalidData("feature/outcome length mismatch".into()));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Outcomes, or an error naming the missing column.
    pub fn require_labels(&self) -> Result<&Labels> {
        self.labels.as_ref().ok_or_else(|| Error::InvalidData("domain has no outcomes".into()))
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Row-concatenation of labeled domains (used for merged baselines).
    pub fn concat(domains: &[DomainData]) -> Result<DomainData> {
        let first = domains.first().ok_or_else(|| Error::InvalidData("no domains to merge".into()))?;
        let p = first.dim();
        if domains.iter().any(|d| d.dim() != p) {
            return Err(Error::InvalidData("domains differ in feature dimension".into()));
        }
        let xs: Vec<ArrayView2<f64>> = domains.iter().map(|d| d.features.x.view()).collect();
        let x = ndarray::concatenate(Axis(0), &xs).expect("column counts checked");
        let mut ys = Vec::with_capacity(domains.len());
        for d in domains {
            ys.push(d.require_labels()?.y());
        }
        let y = ndarray::concatenate(Axis(0), &ys).expect("1-d concat");
        DomainData::labeled(x, y)
    }
}
