//! Multi-source domain adaptation for regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a minimal dense network stack with analytic gradients and first-order optimizers.
//! - [`splines`]: restricted cubic spline basis used to parameterise continuous importance weights.
//! - [`cqls`]: a small dense active-set solver for constrained least squares.
//! - [`label_shift`]: black-box shift estimation extended to continuous outcomes.
//! - [`adversarial`]: importance-weighted regression trained against a Lipschitz critic.
//! - [`single_da`]: alternation between weight estimation and adversarial training.
//! - [`ensemble`]: cross-domain stacking, similarity and blended ensemble weights.
//! - [`sim`]: data generators, baselines and the replicate experiment harness.

pub mod adversarial;
pub mod cqls;
pub mod data;
pub mod ensemble;
pub mod label_shift;
pub mod nn;
pub mod seed;
pub mod sim;
pub mod single_da;
pub mod splines;
pub mod stats;

mod error;

pub use data::{DomainData, Features, Labels};
pub use error::{Error, Result};
