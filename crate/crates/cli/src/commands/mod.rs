pub mod apply;
pub mod decompose;
pub mod eval;
pub mod filter;
pub mod sweep;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use retouch_core::{load_image, ChannelMode, FilterSpec, ImageBuf, MapKind, TrainConfig};

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm"];

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no images found in {}", dir.display());
    }
    Ok(files)
}

pub fn load(path: &Path) -> anyhow::Result<ImageBuf> {
    load_image(path).with_context(|| format!("loading {}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    /// Train on luma only; chroma passes through
    LumaOnly,
    /// Train Y, Cb and Cr independently
    PerChannel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    /// Blend of learned matrices weighted by a neural field
    Blend,
    /// Plain MLP regressing the output patch
    Regressor,
}

#[derive(Args, Clone, Debug)]
pub struct TrainFlags {
    /// Number of blended matrices per band
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    /// Number of band-pass levels (bands = levels + 1)
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Odd patch side length
    #[arg(long, default_value_t = 3)]
    pub patch_size: usize,
    /// Hidden width of the weight field
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Learning-rate decay per epoch
    #[arg(long, default_value_t = 0.96)]
    pub decay: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// Patches per optimizer step
    #[arg(long, default_value_t = 4096)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub leaky_slope: f64,
    #[arg(long, value_enum, default_value_t = ChannelArg::LumaOnly)]
    pub channel_mode: ChannelArg,
    #[arg(long, value_enum, default_value_t = BaselineArg::Blend)]
    pub baseline: BaselineArg,
}

impl TrainFlags {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            n_levels: self.levels,
            patch_size: self.patch_size,
            hidden: self.hidden,
            lr: self.lr,
            decay: self.decay,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            leaky_slope: self.leaky_slope,
            channel_mode: match self.channel_mode {
                ChannelArg::LumaOnly => ChannelMode::LumaOnly,
                ChannelArg::PerChannel => ChannelMode::PerChannel,
            },
            map_kind: match self.baseline {
                BaselineArg::Blend => MapKind::Blend,
                BaselineArg::Regressor => MapKind::Regressor,
            },
            ..TrainConfig::default()
        }
    }
}

/// Resolved training settings as `key=value` pairs, in a fixed order.
pub fn config_pairs(cfg: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("k", cfg.k.to_string()),
        ("levels", cfg.n_levels.to_string()),
        ("patch_size", cfg.patch_size.to_string()),
        ("hidden", cfg.hidden.to_string()),
        ("lr", format!("{:e}", cfg.lr)),
        ("decay", cfg.decay.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch", cfg.batch.to_string()),
        ("seed", cfg.seed.to_string()),
        ("leaky_slope", cfg.leaky_slope.to_string()),
        ("channel_mode", format!("{:?}", cfg.channel_mode)),
        ("baseline", format!("{:?}", cfg.map_kind)),
        ("adam_beta1", cfg.adam.beta1.to_string()),
        ("adam_beta2", cfg.adam.beta2.to_string()),
        ("adam_eps", format!("{:e}", cfg.adam.eps)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    Gaussian,
    Unsharp,
    Bilateral,
    LocalLaplacian,
}

#[derive(Args, Clone, Debug)]
pub struct FilterFlags {
    /// Filter type; parameters default to the matching preset
    #[arg(long = "type", value_enum)]
    pub kind: Option<FilterKind>,
    /// Named parameter set: gaussian, unsharp, bilateral, ll-smooth,
    /// ll-enhance, ll-enhance-wide
    #[arg(long)]
    pub preset: Option<String>,
    /// Gaussian / unsharp blur sigma
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Unsharp amount
    #[arg(long)]
    pub amount: Option<f64>,
    /// Bilateral spatial sigma
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Bilateral / local Laplacian range sigma
    #[arg(long)]
    pub sigma_r: Option<f64>,
    /// Local Laplacian detail exponent (> 1 smooths, < 1 enhances)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Local Laplacian pyramid levels
    #[arg(long)]
    pub ll_levels: Option<usize>,
}

impl FilterFlags {
    pub fn spec(&self) -> anyhow::Result<FilterSpec> {
        let base = match (&self.preset, self.kind) {
            (Some(name), kind) => {
                let spec = FilterSpec::preset(name)
                    .with_context(|| format!("unknown preset {name:?}"))?;
                if let Some(kind) = kind {
                    if kind != kind_of(&spec) {
                        bail!("--type {kind:?} contradicts preset {name:?}");
                    }
                }
                spec
            }
            (None, Some(kind)) => FilterSpec::preset(match kind {
                FilterKind::Gaussian => "gaussian",
                FilterKind::Unsharp => "unsharp",
                FilterKind::Bilateral => "bilateral",
                FilterKind::LocalLaplacian => "ll-smooth",
            })
            .expect("built-in preset"),
            (None, None) => bail!("give --type or --preset"),
        };
        let spec = match base {
            FilterSpec::Gaussian { sigma } => FilterSpec::Gaussian {
                sigma: self.sigma.unwrap_or(sigma),
            },
            FilterSpec::Unsharp { sigma, amount } => FilterSpec::Unsharp {
                sigma: self.sigma.unwrap_or(sigma),
                amount: self.amount.unwrap_or(amount),
            },
            FilterSpec::Bilateral { sigma_s, sigma_r } => FilterSpec::Bilateral {
                sigma_s: self.sigma_s.unwrap_or(sigma_s),
                sigma_r: self.sigma_r.unwrap_or(sigma_r),
            },
            FilterSpec::LocalLaplacian { alpha, sigma_r, levels } => FilterSpec::LocalLaplacian {
                alpha: self.alpha.unwrap_or(alpha),
                sigma_r: self.sigma_r.unwrap_or(sigma_r),
                levels: self.ll_levels.unwrap_or(levels),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn kind_of(spec: &FilterSpec) -> FilterKind {
    match spec {
        FilterSpec::Gaussian { .. } => FilterKind::Gaussian,
        FilterSpec::Unsharp { .. } => FilterKind::Unsharp,
        FilterSpec::Bilateral { .. } => FilterKind::Bilateral,
        FilterSpec::LocalLaplacian { .. } => FilterKind::LocalLaplacian,
    }
}

pub fn describe_filter(spec: &FilterSpec) -> String {
    match *spec {
        FilterSpec::Gaussian { sigma } => format!("gaussian sigma={sigma}"),
        FilterSpec::Unsharp { sigma, amount } => format!("unsharp sigma={sigma} amount={amount}"),
        FilterSpec::Bilateral { sigma_s, sigma_r } => {
            format!("bilateral sigma_s={sigma_s} sigma_r={sigma_r}")
        }
        FilterSpec::LocalLaplacian { alpha, sigma_r, levels } => {
            format!("local-laplacian alpha={alpha} sigma_r={sigma_r} levels={levels}")
        }
    }
}

/// `path` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
