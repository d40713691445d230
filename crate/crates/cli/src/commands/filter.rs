use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use retouch_core::{save_image, FilterSpec, ImageBuf};

use super::{describe_filter, list_images, load, sibling, FilterFlags};
use crate::manifest::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Channels {
    /// Filter every channel
    All,
    /// Filter the luma plane only and write it as a grey image
    Luma,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub filter: FilterFlags,
    #[arg(long, value_enum, default_value_t = Channels::All)]
    pub channel: Channels,
    #[arg(long, conflicts_with = "input_dir", requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, requires = "output_dir")]
    pub input_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

pub fn filter_image(spec: &FilterSpec, img: &ImageBuf, channel: Channels) -> anyhow::Result<ImageBuf> {
    Ok(match channel {
        Channels::All => spec.apply(img)?,
        Channels::Luma => spec.apply(&img.luma().to_image())?,
    })
}

fn filter_one(spec: &FilterSpec, channel: Channels, input: &Path, output: &Path) -> anyhow::Result<()> {
    let out = filter_image(spec, &load(input)?, channel)?;
    save_image(&out, output).with_context(|| format!("saving {}", output.display()))
}

pub fn run(args: FilterArgs) -> anyhow::Result<()> {
    let spec = args.filter.spec()?;
    let mut manifest = Manifest::new("filter");
    manifest.set("filter", describe_filter(&spec));
    manifest.set("channel", format!("{:?}", args.channel));
    match (&args.input, &args.input_dir) {
        (Some(input), None) => {
            let output = args.output.as_ref().expect("required by clap");
            filter_one(&spec, args.channel, input, output)?;
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
                filter_one(&spec, args.channel, f, &out_dir.join(f.file_name().expect("file name")))
            })?;
            manifest.set_path("input_dir", dir);
            manifest.set_path("output_dir", out_dir);
            manifest.write(&out_dir.join("manifest.txt"))?;
            println!("wrote {} images to {}", files.len(), out_dir.display());
        }
        _ => bail!("give --input/--output or --input-dir/--output-dir"),
    }
    Ok(())
}
