//! Ground-truth filters used to generate before/after pairs.
//!
//! Every filter works plane by plane and is deterministic. Outputs are
//! clamped to `[0, 1]` when converted back to an [`ImageBuf`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::{BandBuf, ImageBuf};
use crate::pyramid::gaussian_blur;

/// A filter and its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterSpec {
    Gaussian { sigma: f64 },
    Unsharp { sigma: f64, amount: f64 },
    Bilateral { sigma_s: f64, sigma_r: f64 },
    LocalLaplacian { alpha: f64, sigma_r: f64, levels: usize },
}

/// Named parameter sets: `(name, spec, description)`.
pub const PRESETS: &[(&str, FilterSpec, &str)] = &[
    ("gaussian", FilterSpec::Gaussian { sigma: 2.0 }, "Gaussian blur, sigma 2"),
    (
        "unsharp",
        FilterSpec::Unsharp { sigma: 2.0, amount: 1.0 },
        "unsharp mask, sigma 2, amount 1",
    ),
    (
        "bilateral",
        FilterSpec::Bilateral { sigma_s: 3.0, sigma_r: 0.1 },
        "bilateral, spatial sigma 3, range sigma 0.1",
    ),
    (
        "ll-smooth",
        FilterSpec::LocalLaplacian { alpha: 2.0, sigma_r: 0.2, levels: 5 },
        "local Laplacian detail smoothing, alpha 2, sigma_r 0.2",
    ),
    (
        "ll-enhance",
        FilterSpec::LocalLaplacian { alpha: 0.5, sigma_r: 0.1, levels: 5 },
        "local Laplacian detail enhancement, alpha 0.5, sigma_r 0.1",
    ),
    (
        "ll-enhance-wide",
        FilterSpec::LocalLaplacian { alpha: 0.7, sigma_r: 0.4, levels: 5 },
        "local Laplacian detail enhancement, alpha 0.7, sigma_r 0.4",
    ),
];

impl FilterSpec {
    pub fn preset(name: &str) -> Option<FilterSpec> {
        PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, s, _)| *s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            FilterSpec::Gaussian { sigma } => positive("sigma", sigma),
            FilterSpec::Unsharp { sigma, amount } => {
                positive("sigma", sigma)?;
                if amount.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("amount must be finite, got {amount}")))
                }
            }
            FilterSpec::Bilateral { sigma_s, sigma_r } => {
                positive("sigma_s", sigma_s)?;
                positive("sigma_r", sigma_r)
            }
            FilterSpec::LocalLaplacian { alpha, sigma_r, levels } => {
                positive("alpha", alpha)?;
                positive("sigma_r", sigma_r)?;
                if levels < 3 {
                    return Err(Error::InvalidParameter(format!(
                        "local Laplacian needs at least 3 levels, got {levels}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Filters one plane without clamping.
    pub fn apply_band(&self, band: &BandBuf) -> Result<BandBuf> {
        self.validate()?;
        match *self {
            FilterSpec::Gaussian { sigma } => gaussian_blur(band, sigma),
            FilterSpec::Unsharp { sigma, amount } => unsharp_band(band, sigma, amount),
            FilterSpec::Bilateral { sigma_s, sigma_r } => Ok(bilateral_band(band, sigma_s, sigma_r)),
            FilterSpec::LocalLaplacian { alpha, sigma_r, levels } => {
                local_laplacian_band(band, alpha, sigma_r, levels)
            }
        }
    }

    /// Filters every channel and clamps to `[0, 1]`.
    pub fn apply(&self, img: &ImageBuf) -> Result<ImageBuf> {
        let planes = img
            .planes()
            .iter()
            .map(|p| self.apply_band(p))
            .collect::<Result<Vec<_>>>()?;
        ImageBuf::from_planes(&planes)
    }
}

pub fn gaussian_filter(img: &ImageBuf, sigma: f64) -> Result<ImageBuf> {
    FilterSpec::Gaussian { sigma }.apply(img)
}

/// `clamp(x + amount (x - G(sigma) * x))`.
pub fn unsharp_mask(img: &ImageBuf, sigma: f64, amount: f64) -> Result<ImageBuf> {
    FilterSpec::Unsharp { sigma, amount }.apply(img)
}

pub fn bilateral_filter(img: &ImageBuf, sigma_s: f64, sigma_r: f64) -> Result<ImageBuf> {
    FilterSpec::Bilateral { sigma_s, sigma_r }.apply(img)
}

pub fn local_laplacian(img: &ImageBuf, alpha: f64, sigma_r: f64, levels: usize) -> Result<ImageBuf> {
    FilterSpec::LocalLaplacian { alpha, sigma_r, levels }.apply(img)
}

fn unsharp_band(band: &BandBuf, sigma: f64, amount: f64) -> Result<BandBuf> {
    let blur = gaussian_blur(band, sigma)?;
    band.zip_map(&blur, |x, b| x + amount * (x - b))
}

/// Brute-force bilateral over a `(2r+1)^2` window, `r = ceil(3 sigma_s)`,
/// with replicated borders.
fn bilateral_band(band: &BandBuf, sigma_s: f64, sigma_r: f64) -> BandBuf {
    let r = (3.0 * sigma_s).ceil() as isize;
    let side = (2 * r + 1) as usize;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma_s * sigma_s)).exp());
        }
    }
    let range_denom = 2.0 * sigma_r * sigma_r;
    let (w, h) = band.size();
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let centre = band.get(x, y);
            let (mut num, mut den) = (0.0, 0.0);
            let mut s = spatial.iter();
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = band.get_clamped(x as isize + dx, y as isize + dy);
                    let diff = v - centre;
                    let wgt = s.next().expect("window tap") * (-(diff * diff) / range_denom).exp();
                    num += wgt * diff;
                    den += wgt;
                }
            }
            // offsets from the centre keep flat regions exact
            *out = centre + num / den;
        }
    });
    BandBuf {
        width: w,
        height: h,
        data,
    }
}

const BURT: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Blur with the 5-tap binomial kernel and keep every second sample.
/// Output size is `ceil(n / 2)`; borders are clamped.
pub fn reduce(img: &BandBuf) -> BandBuf {
    let (w, h) = img.size();
    let (w2, h2) = (w.div_ceil(2), h.div_ceil(2));
    let mut rows = vec![0.0; w2 * h];
    for y in 0..h {
        for x in 0..w2 {
            rows[y * w2 + x] = BURT
                .iter()
                .enumerate()
                .map(|(m, k)| k * img.data[y * w + clamp_index(2 * x as isize + m as isize - 2, w)])
                .sum();
        }
    }
    let mut data = vec![0.0; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            data[y * w2 + x] = BURT
                .iter()
                .enumerate()
                .map(|(m, k)| k * rows[clamp_index(2 * y as isize + m as isize - 2, h) * w2 + x])
                .sum();
        }
    }
    BandBuf {
        width: w2,
        height: h2,
        data,
    }
}

/// 1-D expansion weights and coarse indices contributing to fine sample `p`.
fn expand_taps(p: usize, n_coarse: usize) -> impl Iterator<Item = (f64, usize)> {
    (-2isize..=2).filter_map(move |m| {
        let q = p as isize - m;
        (q % 2 == 0).then(|| (2.0 * BURT[(m + 2) as usize], clamp_index(q / 2, n_coarse)))
    })
}

/// Value of the expansion of `coarse` at fine position `(x, y)`.
fn expand_at(coarse: &BandBuf, x: usize, y: usize) -> f64 {
    let (w, h) = coarse.size();
    let mut acc = 0.0;
    for (wy, qy) in expand_taps(y, h) {
        for (wx, qx) in expand_taps(x, w) {
            acc += wy * wx * coarse.data[qy * w + qx];
        }
    }
    acc
}

/// Upsamples `coarse` to `size` with the interpolating binomial kernel.
pub fn expand(coarse: &BandBuf, size: (usize, usize)) -> BandBuf {
    let (w, h) = size;
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = expand_at(coarse, x, y);
        }
    }
    BandBuf {
        width: w,
        height: h,
        data,
    }
}

pub fn gaussian_pyramid(img: &BandBuf, levels: usize) -> Vec<BandBuf> {
    let mut pyr = vec![img.clone()];
    while pyr.len() < levels {
        let next = reduce(pyr.last().expect("non-empty"));
        pyr.push(next);
    }
    pyr
}

/// Burt-Adelson pyramid; the last entry is the coarsest Gaussian level.
pub fn laplacian_pyramid(img: &BandBuf, levels: usize) -> Vec<BandBuf> {
    let g = gaussian_pyramid(img, levels);
    let mut out: Vec<BandBuf> = g
        .windows(2)
        .map(|w| {
            let up = expand(&w[1], w[0].size());
            w[0].zip_map(&up, |a, b| a - b).expect("matching sizes")
        })
        .collect();
    out.push(g.last().expect("non-empty").clone());
    out
}

pub fn collapse(pyr: &[BandBuf]) -> BandBuf {
    let mut acc = pyr.last().expect("non-empty pyramid").clone();
    for band in pyr.iter().rev().skip(1) {
        let up = expand(&acc, band.size());
        acc = band.zip_map(&up, |a, b| a + b).expect("matching sizes");
    }
    acc
}

/// Point-wise remapping around reference `g`: a power curve on details
/// within `sigma_r` of `g`, identity beyond.
pub fn remap(i: f64, g: f64, alpha: f64, sigma_r: f64) -> f64 {
    let d = i - g;
    if d.abs() <= sigma_r {
        g + d.signum() * sigma_r * (d.abs() / sigma_r).powf(alpha)
    } else {
        i
    }
}

/// Laplacian coefficient `(x, y)` of level `level` of the image remapped
/// around `g`, computed on an aligned crop that contains its whole support.
fn remapped_coefficient(
    band: &BandBuf,
    level: usize,
    x: usize,
    y: usize,
    g: f64,
    alpha: f64,
    sigma_r: f64,
) -> f64 {
    let step = 1usize << (level + 1);
    let reach = 3 * step + 2;
    let (w, h) = band.size();
    let span = |c: usize, n: usize| {
        let centre = c << level;
        let lo = centre.saturating_sub(reach) / step * step;
        let hi = (centre + reach + 1).min(n);
        (lo, hi)
    };
    let (x0, x1) = span(x, w);
    let (y0, y1) = span(y, h);
    let cw = x1 - x0;
    let mut crop = Vec::with_capacity(cw * (y1 - y0));
    for yy in y0..y1 {
        crop.extend(band.data[yy * w + x0..yy * w + x1].iter().map(|&v| remap(v, g, alpha, sigma_r)));
    }
    let crop = BandBuf {
        width: cw,
        height: y1 - y0,
        data: crop,
    };
    let g_pyr = gaussian_pyramid(&crop, level + 2);
    let (lx, ly) = (x - (x0 >> level), y - (y0 >> level));
    g_pyr[level].get(lx, ly) - expand_at(&g_pyr[level + 1], lx, ly)
}

fn local_laplacian_band(band: &BandBuf, alpha: f64, sigma_r: f64, levels: usize) -> Result<BandBuf> {
    let (w, h) = band.size();
    let need = 1usize << (levels - 1);
    if w < need || h < need {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            reason: format!("local Laplacian with {levels} levels needs at least {need} pixels per side"),
        });
    }
    let g_pyr = gaussian_pyramid(band, levels);
    let mut out: Vec<BandBuf> = Vec::with_capacity(levels);
    for (level, gl) in g_pyr.iter().enumerate().take(levels - 1) {
        let (lw, lh) = gl.size();
        let mut data = vec![0.0; lw * lh];
        data.par_chunks_mut(lw).enumerate().for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = remapped_coefficient(band, level, x, y, gl.get(x, y), alpha, sigma_r);
            }
        });
        out.push(BandBuf {
            width: lw,
            height: lh,
            data,
        });
    }
    out.push(g_pyr[levels - 1].clone());
    Ok(collapse(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{natural_band, natural_image, psnr_band, random_band};
    use proptest::prelude::*;

    fn max_diff(a: &BandBuf, b: &BandBuf) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_images_are_fixed_points() {
        let img = ImageBuf::filled(40, 36, 3, 0.37).unwrap();
        for (name, spec, _) in PRESETS {
            let out = spec.apply(&img).unwrap();
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-12, "{name}");
            }
        }
        let out = bilateral_filter(&img, 2.0, 0.05).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn gaussian_impulse_matches_dense_convolution() {
        let mut band = BandBuf::zeros(31, 31);
        band.set(15, 15, 1.0);
        let out = FilterSpec::Gaussian { sigma: 2.0 }.apply_band(&band).unwrap();
        let r = 6isize;
        let mut norm = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                norm += (-((dx * dx + dy * dy) as f64) / 8.0).exp();
            }
        }
        for y in 0..31isize {
            for x in 0..31isize {
                let (dx, dy) = (x - 15, y - 15);
                let expect = if dx.abs() <= r && dy.abs() <= r {
                    (-((dx * dx + dy * dy) as f64) / 8.0).exp() / norm
                } else {
                    0.0
                };
                assert!((out.get(x as usize, y as usize) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn narrow_gaussian_is_near_identity() {
        let img = natural_image(96, 96, 1);
        let out = gaussian_filter(&img, 0.3).unwrap();
        assert!(psnr_band(&img.plane(0), &out.plane(0)) > 40.0);
    }

    #[test]
    fn unsharp_examples() {
        let img = natural_image(48, 48, 2);
        assert_eq!(unsharp_mask(&img, 2.0, 0.0).unwrap(), img);
        assert!(matches!(unsharp_mask(&img, 0.0, 1.0), Err(Error::InvalidParameter(_))));

        // step edge along x, every row identical
        let mut step = BandBuf::zeros(24, 4);
        for y in 0..4 {
            for x in 12..24 {
                step.set(x, y, 0.8);
            }
            for x in 0..12 {
                step.set(x, y, 0.2);
            }
        }
        let out = FilterSpec::Unsharp { sigma: 1.0, amount: 1.0 }.apply_band(&step).unwrap();
        let k = crate::pyramid::gaussian_kernel(1.0).unwrap();
        for x in 0..24isize {
            let blur: f64 = (-3..=3isize)
                .map(|m| k[(m + 3) as usize] * if (x + m).clamp(0, 23) >= 12 { 0.8 } else { 0.2 })
                .sum();
            let v = step.get(x as usize, 0);
            assert!((out.get(x as usize, 2) - (2.0 * v - blur)).abs() < 1e-12);
        }
        assert!(out.get(12, 0) > 0.8 && out.get(11, 0) < 0.2);
    }

    #[test]
    fn bilateral_with_huge_range_is_gaussian() {
        let band = natural_band(40, 40, 3);
        let a = FilterSpec::Bilateral { sigma_s: 2.0, sigma_r: 1e6 }.apply_band(&band).unwrap();
        let b = gaussian_blur(&band, 2.0).unwrap();
        assert!(max_diff(&a, &b) < 1e-6);
    }

    #[test]
    fn bilateral_preserves_step_edge() {
        let mut band = BandBuf::zeros(30, 20);
        for y in 0..20 {
            for x in 0..30 {
                band.set(x, y, if x < 15 { 0.2 } else { 0.8 });
            }
        }
        let out = FilterSpec::Bilateral { sigma_s: 3.0, sigma_r: 0.05 }.apply_band(&band).unwrap();
        for y in 0..20 {
            for x in 0..30 {
                let v = out.get(x, y);
                assert!(if x < 15 { v < 0.5 } else { v > 0.5 });
            }
        }

        // direct double loop with explicit Gaussian weights
        let src = natural_band(20, 18, 4);
        let out = FilterSpec::Bilateral { sigma_s: 1.5, sigma_r: 0.1 }.apply_band(&src).unwrap();
        for y in 0..18isize {
            for x in 0..20isize {
                let c = src.get(x as usize, y as usize);
                let (mut num, mut den) = (0.0, 0.0);
                for dy in -5..=5isize {
                    for dx in -5..=5isize {
                        let v = src.get((x + dx).clamp(0, 19) as usize, (y + dy).clamp(0, 17) as usize);
                        let wgt = (-((dx * dx + dy * dy) as f64) / 4.5).exp()
                            * (-((v - c) * (v - c)) / 0.02).exp();
                        num += wgt * v;
                        den += wgt;
                    }
                }
                assert!((out.get(x as usize, y as usize) - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pyramid_collapse_is_exact() {
        let band = random_band(37, 29, 5);
        let pyr = laplacian_pyramid(&band, 4);
        assert_eq!(pyr.iter().map(|b| b.size()).collect::<Vec<_>>(), vec![(37, 29), (19, 15), (10, 8), (5, 4)]);
        assert!(max_diff(&collapse(&pyr), &band) < 1e-14);
    }

    #[test]
    fn expansion_preserves_constants() {
        let c = BandBuf::filled(5, 4, 0.3);
        let up = expand(&c, (10, 7));
        assert!(up.data.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn remap_examples() {
        assert_eq!(remap(0.5, 0.5, 2.0, 0.2), 0.5);
        assert!((remap(0.6, 0.5, 2.0, 0.2) - (0.5 + 0.2 * 0.25)).abs() < 1e-15);
        assert!((remap(0.4, 0.5, 0.5, 0.2) - (0.5 - 0.2 * 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(remap(0.9, 0.5, 2.0, 0.2), 0.9);
        for i in [0.0, 0.3, 0.55, 1.0] {
            assert!((remap(i, 0.5, 1.0, 0.2) - i).abs() < 1e-15);
        }
    }

    /// Every output coefficient from a full-image remap and full pyramids.
    fn brute_force_local_laplacian(band: &BandBuf, alpha: f64, sigma_r: f64, levels: usize) -> BandBuf {
        let g = gaussian_pyramid(band, levels);
        let mut out: Vec<BandBuf> = Vec::new();
        for (l, gl) in g.iter().enumerate().take(levels - 1) {
            let mut lvl = BandBuf::zeros(gl.width, gl.height);
            for y in 0..gl.height {
                for x in 0..gl.width {
                    let remapped = band.map(|v| remap(v, gl.get(x, y), alpha, sigma_r));
                    let lp = laplacian_pyramid(&remapped, levels);
                    lvl.set(x, y, lp[l].get(x, y));
                }
            }
            out.push(lvl);
        }
        out.push(g[levels - 1].clone());
        collapse(&out)
    }

    #[test]
    fn local_laplacian_matches_brute_force() {
        let mut band = natural_band(32, 32, 6);
        for y in 0..32 {
            for x in 0..32 {
                let v = band.get(x, y);
                band.set(x, y, 0.5 * v + 0.4 * x as f64 / 31.0);
            }
        }
        for (alpha, sigma_r) in [(2.0, 0.2), (0.5, 0.1)] {
            let fast = local_laplacian_band(&band, alpha, sigma_r, 4).unwrap();
            let slow = brute_force_local_laplacian(&band, alpha, sigma_r, 4);
            assert!(max_diff(&fast, &slow) < 1e-10);
        }
        let odd = natural_band(45, 38, 7);
        let fast = local_laplacian_band(&odd, 2.0, 0.2, 3).unwrap();
        let slow = brute_force_local_laplacian(&odd, 2.0, 0.2, 3);
        assert!(max_diff(&fast, &slow) < 1e-10);
    }

    #[test]
    fn local_laplacian_direction() {
        let band = natural_band(64, 64, 8);
        let alpha_one = local_laplacian_band(&band, 1.0, 0.2, 5).unwrap();
        assert!(max_diff(&alpha_one, &band) < 1e-12);

        let detail = |b: &BandBuf| {
            let blur = gaussian_blur(b, 1.0).unwrap();
            b.data.iter().zip(&blur.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        };
        let smooth = local_laplacian_band(&band, 2.0, 0.2, 5).unwrap();
        let sharp = local_laplacian_band(&band, 0.5, 0.1, 5).unwrap();
        assert!(detail(&smooth) < detail(&band));
        assert!(detail(&sharp) > detail(&band));
    }

    #[test]
    fn invalid_parameters() {
        let img = natural_image(32, 32, 9);
        assert!(bilateral_filter(&img, 0.0, 0.1).is_err());
        assert!(bilateral_filter(&img, 1.0, -0.1).is_err());
        assert!(local_laplacian(&img, 2.0, 0.2, 2).is_err());
        assert!(local_laplacian(&img, 0.0, 0.2, 4).is_err());
        assert!(matches!(local_laplacian(&img, 2.0, 0.2, 7), Err(Error::TooSmall { .. })));
        assert!(FilterSpec::preset("nope").is_none());
        assert_eq!(FilterSpec::preset("gaussian"), Some(FilterSpec::Gaussian { sigma: 2.0 }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn filters_keep_unit_range(seed in 0u64..1000) {
            let img = natural_image(24, 24, seed);
            for (_, spec, _) in PRESETS.iter().filter(|(n, _, _)| !n.starts_with("ll")) {
                let out = spec.apply(&img).unwrap();
                prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
