//! Numeric kernels and the self-training loop for automatic pixel-level mask
//! generation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; file formats, manifests and the command line live
//! in the `autolabel` crate.
//!
//! Layout:
//!
//! * [`raster`]: planes, RGB images, masks, probability maps, integral images
//!   and the clipped box mean.
//! * [`morphology`]: max/min pooling and the boundary extractor.
//! * [`guided_filter`]: the literal weight-matrix form and the O(1) box-filter
//!   form, plus probability-map refinement.
//! * [`fusion`]: HGL and BG feature fusion.
//! * [`threshold`]: Otsu thresholding.
//! * [`classifier`]: handcrafted features, the per-pixel softmax head, the
//!   image-level GAP head and CAM.
//! * [`selftrain`]: bootstrap strategies, area-ratio selection and the
//!   iterative refinement loop.
//! * [`eval`]: IoU / mIoU / pixel accuracy.
//! * [`synth`]: deterministic scene generator with exact ground truth.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub use error::{Error, Result};

pub mod classifier;
pub mod eval;
pub mod fusion;
pub mod guided_filter;
pub mod morphology;
pub mod raster;
pub mod selftrain;
pub mod synth;
pub mod threshold;

pub use raster::{Image, IntegralPlane, Mask, Plane, ProbMap};
