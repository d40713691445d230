//! One-shot example-based detail retouching.
//!
//! A retouching edit is learned from a single aligned before/after pair.
//! Both images are split into difference-of-Gaussians bands; inside each
//! band, overlapping 3x3 patches are mapped by a convex blend of learned
//! linear maps,
//!
//! ```text
//! y(x) = sum_k f_k(x) A_k x
//! ```
//!
//! where the weights `f(x)` come from a small MLP with a softmax head
//! evaluated on the patch itself. Mapped patches are overlap-averaged back
//! into bands and summed with the untouched low-pass residual.
//!
//! Modules:
//! - [`image_io`]: rasters, 8-bit PNG/PNM I/O, BT.601 Y'CbCr
//! - [`pyramid`]: Gaussian blur, band decomposition and reconstruction
//! - [`patch`]: patch extraction and overlap-average assembly
//! - [`blend`]: weight field, band maps, regressor baseline, model application
//! - [`train`]: l1 objective, hand-derived gradients, Adam, training loop
//! - [`filters`]: reference filters used as ground truth
//! - [`metrics`]: PSNR, SSIM, Fourier-difference maps
//! - [`model_io`]: binary model format
//! - [`transfer`]: train-on-one, score-on-many filter transfer

pub mod blend;
pub mod error;
pub mod filters;
pub mod image_io;
pub mod metrics;
pub mod mlp;
pub mod model_io;
pub mod patch;
pub mod pyramid;
pub mod train;
pub mod transfer;

#[cfg(test)]
mod testutil;

pub use blend::{apply_model, BandMap, ChannelMode, PatchMap, RegressorMap, RetouchModel, WeightField};
pub use error::{Error, Result};
pub use filters::FilterSpec;
pub use image_io::{load_image, save_image, BandBuf, ImageBuf};
pub use metrics::{psnr, ssim, EvalReport};
pub use model_io::{load_model, save_model};
pub use pyramid::LaplacianPyramid;
pub use train::{train, train_with_log, MapKind, TrainConfig, TrainLog};
pub use transfer::{score_transfer, train_transfer};
