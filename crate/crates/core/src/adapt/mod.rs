//! A desk-scale adversarial adaptation demo.
//!
//! A two-layer convolutional [`ToyExtractor`] feeds a three-layer transposed-convolution
//! pixel discriminator ([`PdNet`]) that learns to locate inpainted pixels. Training the
//! extractor against the discriminator shrinks the feature difference between an image
//! and its inpainted copy. All gradients are written out by hand; every run is
//! single-threaded and bit-deterministic for a given seed.

pub mod conv;
pub mod gradcheck;
pub mod nets;
pub mod synth;
pub mod tensor;
pub mod train;

pub use conv::{ConvKind, ConvLayer};
pub use nets::{PdNet, PdNetConfig, PdPass, ToyExtractor, ExtractorPass};
pub use synth::{demo_split, inpaint, synth_dataset, to_tensor, InpaintMode, PixelRect, SourceSample, SyntheticData, SyntheticDomainConfig};
pub use tensor::{resize_bilinear, resize_bilinear_backward, rms_normalize, rms_normalize_backward, Activation, Param, Tensor4};
pub use train::{feature_domain_gap, pixel_auc, train_adversarial, train_pd_only, TraceRecord, TrainConfig, TrainRun};
