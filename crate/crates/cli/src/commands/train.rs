use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use retouch_core::{save_model, train_with_log, MapKind, TrainConfig};

use super::{config_pairs, load, sibling, TrainFlags};
use crate::manifest::{config_hash, Manifest};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Input half of the example pair
    #[arg(long, required_unless_present = "dry_run")]
    pub before: Option<PathBuf>,
    /// Retouched half of the example pair, pixel-aligned with --before
    #[arg(long, required_unless_present = "dry_run")]
    pub after: Option<PathBuf>,
    /// Model file to write
    #[arg(long, required_unless_present = "dry_run")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Per-epoch training log (default: <output>.log)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Print the parameter count for the configuration and exit
    #[arg(long)]
    pub dry_run: bool,
}

pub fn param_summary(cfg: &TrainConfig) -> String {
    let formula = match cfg.map_kind {
        MapKind::Blend => "K*d^2 + (d*H + H) + (H*H + H) + (H*K + K)",
        MapKind::Regressor => "(d*H + H) + (H*H + H) + (H*d + d)",
    };
    let total = cfg.param_count();
    format!(
        "parameters={total} ({:.3}M) per_band={} bands={} channels={} per_band_formula=\"{formula}\" d={} H={} K={}",
        total as f64 / 1e6,
        cfg.params_per_band(),
        cfg.n_levels + 1,
        cfg.channel_mode.channels(),
        cfg.patch_dim(),
        cfg.hidden,
        cfg.k,
    )
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = args.flags.config();
    cfg.validate()?;
    println!("{}", param_summary(&cfg));
    if args.dry_run {
        return Ok(());
    }
    let (before_path, after_path, output) = (
        args.before.expect("required by clap"),
        args.after.expect("required by clap"),
        args.output.expect("required by clap"),
    );
    let before = load(&before_path)?;
    let after = load(&after_path)?;
    let mut manifest = Manifest::new("train");
    let pairs = config_pairs(&cfg);
    for (k, v) in &pairs {
        manifest.set(k, v);
    }
    manifest.set("config_hash", config_hash(&pairs));
    manifest.set_path("before", &before_path);
    manifest.set_file_hash("before_sha256", &before_path)?;
    manifest.set_path("after", &after_path);
    manifest.set_file_hash("after_sha256", &after_path)?;

    let (model, log) = train_with_log(&before, &after, &cfg)?;
    save_model(&model, &output).with_context(|| format!("saving {}", output.display()))?;
    let log_path = args.log.unwrap_or_else(|| sibling(&output, ".log"));
    let mut text = log.to_lines().join("\n");
    text.push('\n');
    std::fs::write(&log_path, text).with_context(|| format!("writing {}", log_path.display()))?;
    for b in &log.bands {
        println!(
            "final channel={} band={} patches={} loss={:.6e}",
            b.channel, b.band, b.patches, b.final_loss
        );
    }
    manifest.set_path("model", &output);
    manifest.set_file_hash("model_sha256", &output)?;
    manifest.set_path("log", &log_path);
    manifest.write(&sibling(&output, ".manifest"))?;
    println!("wrote {}", output.display());
    Ok(())
}
