//! Exact discrete information identities, correlated Gaussian posteriors,
//! a total-correlation estimator, MIG scoring, a sprite dataset and a small
//! VAE trainer.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod datagen;
pub mod gaussian;
pub mod metrics;
pub mod prob;
pub mod tc;
pub mod vae;

pub use datagen::{generate, FactorSpec, ToyDataset};
pub use gaussian::{CorrelatedNoiseSpec, GaussianPosterior, Matrix};
pub use metrics::{mig, MigReport, RepresentationDump};
pub use prob::{ConditionalTable, Divergence, ProbTable, Variable};
pub use tc::{estimate_tc, PosteriorBatch, TcEstimate};
pub use vae::{train, MlpParams, TrainReport, TrainStatus, VaeConfig};
