use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use retouch_core::{score_transfer, train_transfer};

use super::{config_pairs, describe_filter, list_images, load, sibling, FilterFlags, TrainFlags};
use crate::manifest::{config_hash, Manifest};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Training image; its filtered version is the target
    #[arg(long)]
    pub before: PathBuf,
    /// Held-out evaluation images
    #[arg(long)]
    pub corpus: PathBuf,
    /// Matrix counts to train, comma separated
    #[arg(long = "ks", value_delimiter = ',', default_value = "1,16,64,256")]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Tab-separated table to write
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: SweepArgs) -> anyhow::Result<()> {
    let spec = args.filter.spec()?;
    let before = load(&args.before)?;
    let corpus = list_images(&args.corpus)?
        .into_iter()
        .map(|p| Ok((p.display().to_string(), load(&p)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let base = args.train.config();
    let mut manifest = Manifest::new("sweep");
    manifest.set("filter", describe_filter(&spec));
    let pairs = config_pairs(&base);
    for (k, v) in pairs.iter().filter(|(k, _)| *k != "k") {
        manifest.set(k, v);
    }
    manifest.set(
        "ks",
        args.ks.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    );
    manifest.set("config_hash", config_hash(&pairs));
    manifest.set_path("before", &args.before);
    manifest.set_file_hash("before_sha256", &args.before)?;
    manifest.set_path("corpus", &args.corpus);

    let mut table = String::from("K\tPSNR_dB\tSSIM\n");
    for &k in &args.ks {
        let cfg = retouch_core::TrainConfig { k, ..base.clone() };
        cfg.validate()?;
        let (model, _) = train_transfer(&before, &spec, &cfg)?;
        let report = score_transfer(&model, &spec, &corpus)?;
        println!("K={k} PSNR_dB={:.4} SSIM={:.6}", report.psnr_db(), report.ssim());
        writeln!(table, "{k}\t{:.4}\t{:.6}", report.psnr_db(), report.ssim())?;
    }
    std::fs::write(&args.output, &table)
        .with_context(|| format!("writing {}", args.output.display()))?;
    manifest.set_path("output", &args.output);
    manifest.set_file_hash("output_sha256", &args.output)?;
    manifest.write(&sibling(&args.output, ".manifest"))?;
    println!("wrote {}", args.output.display());
    Ok(())
}
