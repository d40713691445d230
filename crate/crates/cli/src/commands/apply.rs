use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use retouch_core::{apply_model, load_model, save_image, RetouchModel};

use super::{list_images, load, sibling};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct ApplyArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Single input image
    #[arg(long, conflicts_with = "input_dir", requires = "output")]
    pub input: Option<PathBuf>,
    /// Output image for --input
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Retouch every image in a directory
    #[arg(long, requires = "output_dir")]
    pub input_dir: Option<PathBuf>,
    /// Destination directory for --input-dir (same file names)
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn apply_one(model: &RetouchModel, input: &Path, output: &Path) -> anyhow::Result<()> {
    let img = load(input)?;
    let out = apply_model(model, &img).with_context(|| format!("retouching {}", input.display()))?;
    save_image(&out, output).with_context(|| format!("saving {}", output.display()))
}

pub fn run(args: ApplyArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let mut manifest = Manifest::new("apply");
    manifest.set_path("model", &args.model);
    manifest.set_file_hash("model_sha256", &args.model)?;
    manifest.set("seed", model.seed);
    match (&args.input, &args.input_dir) {
        (Some(input), None) => {
            let output = args.output.as_ref().expect("required by clap");
            apply_one(&model, input, output)?;
            manifest.set_path("input", input);
            manifest.set_path("output", output);
            manifest.write(&sibling(output, ".manifest"))?;
            println!("wrote {}", output.display());
        }
        (None, Some(dir)) => {
            let out_dir = args.output_dir.as_ref().expect("required by clap");
            std::fs::create_dir_all(out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let files = list_images(dir)?;
            files.par_iter().try_for_each(|f| {
                apply_one(&model, f, &out_dir.join(f.file_name().expect("file name")))
            })?;
            manifest.set_path("input_dir", dir);
            manifest.set_path("output_dir", out_dir);
            manifest.set("images", files.len());
            manifest.write(&out_dir.join("manifest.txt"))?;
            println!("wrote {} images to {}", files.len(), out_dir.display());
        }
        _ => bail!("give --input/--output or --input-dir/--output-dir"),
    }
    Ok(())
}
