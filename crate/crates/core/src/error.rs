use thiserror::Error;

use crate::adversarial::AdversarialError;
use crate::cqls::QpError;
use crate::label_shift::LabelShiftError;
use crate::nn::NnError;
use crate::splines::SplineError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; module errors convert into it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    LabelShift(#[from] LabelShiftError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
    #[error("singular least-squares design: {0}")]
    SingularDesign(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}
