use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use retouch_core::pyramid::{decompose_with, ScalePolicy};
use retouch_core::{save_image, BandBuf};

use super::load;
use crate::manifest::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Band 0 at full size, band l at 1/2^(l-1)
    Guarded,
    /// Band l at 1/2^l
    Strict,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Directory for band_<l>.pgm, residual.pgm and scales.txt
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyArg::Guarded)]
    pub scale_policy: PolicyArg,
}

pub fn run(args: DecomposeArgs) -> anyhow::Result<()> {
    let img = load(&args.input)?;
    let policy = match args.scale_policy {
        PolicyArg::Guarded => ScalePolicy::Guarded,
        PolicyArg::Strict => ScalePolicy::Strict,
    };
    let pyr = decompose_with(&img.luma(), args.levels, policy)?;
    let dir = &args.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut scales = String::new();
    for (l, (band, s)) in pyr.bands.iter().zip(&pyr.band_scales).enumerate() {
        // signed band offset: grey 128 is zero
        let shown: BandBuf = band.map(|v| v + 0.5);
        save_image(&shown.to_image(), dir.join(format!("band_{l}.pgm")))?;
        let (w, h) = band.size();
        scales.push_str(&format!("band_{l} scale={s} size={w}x{h}\n"));
    }
    save_image(&pyr.residual.to_image(), dir.join("residual.pgm"))?;
    let (w, h) = pyr.residual.size();
    scales.push_str(&format!("residual scale={} size={w}x{h}\n", pyr.residual_scale));
    std::fs::write(dir.join("scales.txt"), scales)?;
    let mut manifest = Manifest::new("decompose");
    manifest.set_path("input", &args.input);
    manifest.set("levels", args.levels);
    manifest.set("scale_policy", format!("{:?}", policy));
    manifest.set_path("output_dir", dir);
    manifest.write(&dir.join("manifest.txt"))?;
    println!("wrote {} bands and residual to {}", pyr.bands.len(), dir.display());
    Ok(())
}
