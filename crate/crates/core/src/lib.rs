//! Pixel-level segmentation, annotation and OCR benchmarking for cropped
//! word images.
//!
//! The crate is organised along the annotation pipeline:
//!
//! - [`raster`]: RGB word images, colour planes and binary masks
//! - [`bank`]: the sixteen automatic segmentation candidates
//! - [`mask`]: polygon patches, component labels, overlays, mask files
//! - [`store`]: dataset manifests and per-image annotation records
//! - [`recognize`]: margin padding, OCR rendering and the external engine adapter
//! - [`eval`]: word recognition rate and normalised edit distance

pub mod bank;
pub mod eval;
mod fsutil;
pub mod mask;
pub mod raster;
pub mod recognize;
pub mod store;
