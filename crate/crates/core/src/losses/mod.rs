//! Discriminator and generator losses.
//!
//! [`pixel`] holds the per-pixel discriminator losses and label smoothing;
//! [`hungarian`] and [`set`] implement matching-based set-prediction loss.

pub mod hungarian;
pub mod pixel;
pub mod set;

pub use hungarian::{hungarian, MatchResult};
pub use pixel::{
    generator_targets, l_pd, l_pd_gen, pd_loss_grad, smooth_one_target, Domain, LossWeights,
    PdLoss, PixelMapBatch,
};
pub use set::{giou, reconstruction_loss, total_generator_loss, PredictedSet, RecWeights, Slot};
