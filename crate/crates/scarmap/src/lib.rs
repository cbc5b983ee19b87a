//! Burned-area mapping from paired pre/post-fire Landsat tiles.
//!
//! The pipeline builds two dataset variants from multi-band rasters and a
//! binary fire-scar label per fire event:
//!
//! * **AS (AllSizes)** -- crops equal to the scar bounding box, zero-padded to
//!   128x128 downstream (class-balanced).
//! * **128 (F128)** -- fixed 128x128 windows centered on the scar
//!   (class-imbalanced).
//!
//! Both feed a modified U-Net (bilinear upsampling, single-convolution
//! deepest block) trained with BCE/Adam and scored with Dice, omission and
//! commission errors. A deterministic synthetic corpus generator makes every
//! stage testable without external imagery.

pub mod dataset;
pub mod error;
pub mod hpo;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod raster;
pub mod synth;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
