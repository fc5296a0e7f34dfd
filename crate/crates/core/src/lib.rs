//! Layout-quality metrics and pixel-level domain adaptation for image-aware poster layouts.
//!
//! - [`layout`] / [`graphic`]: the layout data model and content-agnostic metrics.
//! - [`raster`]: image grids, Sobel/blur filters, white-patch maps, R_com and R_sub.
//! - [`perceptual`]: Gaussian fitting, Fréchet distance, feature providers and R_shm.
//! - [`losses`]: discriminator losses, label smoothing, Hungarian matching, set loss.
//! - [`adapt`]: a small convolutional trainer demonstrating pixel-level feature alignment.
//! - [`io`]: annotation JSON, feature files and raster codecs.
//! - [`report`]: corpus metric values with their contributing-sample counts.

pub mod adapt;
pub mod error;
pub mod graphic;
pub mod io;
pub mod layout;
pub mod losses;
pub mod perceptual;
pub mod raster;
pub mod report;

pub use error::{Error, Result};
pub use layout::{BBox, Element, ElementKind, Layout};
