//! Filter-transfer protocol: learn a reference filter from one example
//! pair, then score the model on held-out images against the same filter.

use rayon::prelude::*;

use crate::blend::{apply_model, RetouchModel};
use crate::error::Result;
use crate::filters::FilterSpec;
use crate::image_io::ImageBuf;
use crate::metrics::EvalReport;
use crate::train::{train_with_log, TrainConfig, TrainLog};

/// Trains on `(before, spec(before))`.
pub fn train_transfer(
    before: &ImageBuf,
    spec: &FilterSpec,
    cfg: &TrainConfig,
) -> Result<(RetouchModel, TrainLog)> {
    let after = spec.apply(before)?;
    train_with_log(before, &after, cfg)
}

/// PSNR and SSIM of `model(img)` against `spec(img)`, compared on luma.
pub fn score_transfer(
    model: &RetouchModel,
    spec: &FilterSpec,
    images: &[(String, ImageBuf)],
) -> Result<EvalReport> {
    let planes = images
        .par_iter()
        .map(|(_, img)| Ok((apply_model(model, img)?.luma(), spec.apply(img)?.luma())))
        .collect::<Result<Vec<_>>>()?;
    let mut report = EvalReport::default();
    for ((name, _), (out, reference)) in images.iter().zip(&planes) {
        report.push(name.clone(), out, reference)?;
    }
    Ok(report)
}
