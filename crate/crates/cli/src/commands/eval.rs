use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use retouch_core::metrics::{fft_diff, psnr_image, ImageScore};
use retouch_core::{save_image, ssim, BandBuf, EvalReport, ImageBuf};

use super::{list_images, load};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalChannel {
    /// Compare BT.601 luma
    Luma,
    /// PSNR over all channels, SSIM averaged over channels
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Image or directory under test
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference image or directory (matched by file name)
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalChannel::Luma)]
    pub channel: EvalChannel,
    /// Write the log-scaled Fourier magnitude difference of the luma
    /// planes (single-image mode only)
    #[arg(long)]
    pub fft_diff: Option<PathBuf>,
    /// Also write the report lines to this file
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn score(name: String, pred: &ImageBuf, reference: &ImageBuf, channel: EvalChannel) -> anyhow::Result<ImageScore> {
    if pred.dims() != reference.dims() {
        bail!(
            "{name}: size {:?} does not match reference {:?}",
            pred.dims(),
            reference.dims()
        );
    }
    Ok(match channel {
        EvalChannel::Luma => {
            let (p, r) = (pred.luma(), reference.luma());
            ImageScore {
                name,
                psnr_db: retouch_core::psnr(&p, &r, 1.0)?,
                ssim: ssim(&p, &r)?,
            }
        }
        EvalChannel::All => {
            let (pp, rp) = (pred.planes(), reference.planes());
            let s = pp
                .iter()
                .zip(&rp)
                .map(|(a, b)| ssim(a, b))
                .sum::<retouch_core::Result<f64>>()?;
            ImageScore {
                name,
                psnr_db: psnr_image(pred, reference, 1.0)?,
                ssim: s / pp.len() as f64,
            }
        }
    })
}

fn pairs(pred: &Path, reference: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    match (pred.is_dir(), reference.is_dir()) {
        (false, false) => Ok(vec![(pred.to_path_buf(), reference.to_path_buf())]),
        (true, true) => list_images(pred)?
            .into_iter()
            .map(|p| {
                let r = reference.join(p.file_name().expect("file name"));
                if !r.is_file() {
                    bail!("no reference for {} in {}", p.display(), reference.display());
                }
                Ok((p, r))
            })
            .collect(),
        _ => bail!("--pred and --reference must both be files or both be directories"),
    }
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let pairs = pairs(&args.pred, &args.reference)?;
    if args.fft_diff.is_some() && pairs.len() != 1 {
        bail!("--fft-diff needs a single image pair");
    }
    let mut report = EvalReport::default();
    for (p, r) in &pairs {
        let (pred, reference) = (load(p)?, load(r)?);
        report
            .images
            .push(score(p.display().to_string(), &pred, &reference, args.channel)?);
        if let Some(out) = &args.fft_diff {
            let map: BandBuf = fft_diff(&pred.luma(), &reference.luma())?;
            save_image(&map.to_image(), out).with_context(|| format!("saving {}", out.display()))?;
        }
    }
    let lines = report.to_lines();
    for l in &lines {
        println!("{l}");
    }
    if let Some(out) = &args.output {
        std::fs::write(out, lines.join("\n") + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
