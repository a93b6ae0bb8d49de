//! Dense feedforward networks with hand-written backpropagation.
//!
//! Only what adversarial training needs: affine layers with identity, tanh or
//! relu activations, full-batch forward/backward passes, SGD and Adam updates,
//! entry-wise weight clipping and a finite-difference gradient checker.

mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{grad_check, GradCheckReport};
pub use mlp::{Activation, ForwardTrace, Gradients, Layer, LayerGrad, Mlp, MLP_FORMAT_VERSION};
pub use optim::{OptimizerKind, OptimizerState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("layer {layer}: expected input width {expected}, got {found}")]
    DimensionMismatch { layer: usize, expected: usize, found: usize },
    #[error("layer {layer}: {what} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { layer: usize, what: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("network has no layers")]
    Empty,
    #[error("layer {layer}: non-finite parameter")]
    NonFinite { layer: usize },
    #[error("unsupported network document version {0}")]
    Version(u32),
}
