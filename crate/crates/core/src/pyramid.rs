//! Gaussian filtering and the difference-of-Gaussians band decomposition.
//!
//! Bands are defined at full resolution,
//!
//! ```text
//! L_0 = X - G(2) * X
//! L_l = G(2^l) * X - G(2^(l+1)) * X      (l = 1 ..= n)
//! S   = G(2^(n+1)) * X
//! ```
//!
//! so that `S + sum(L_l) == X`. Each band is then box-downsampled by its
//! [`ScalePolicy`] factor; reconstruction upsamples bilinearly and sums.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::BandBuf;

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(taps)
}

/// Correlates every row with `kernel`, replicating edge samples.
fn convolve_rows(data: &[f64], width: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = kernel.len() / 2;
    let mut out = vec![0.0; data.len()];
    let mut padded = vec![0.0; width + 2 * radius];
    for (row, dst) in data.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let (first, last) = (row[0], row[width - 1]);
        padded[..radius].fill(first);
        padded[radius..radius + width].copy_from_slice(row);
        padded[radius + width..].fill(last);
        for (x, d) in dst.iter_mut().enumerate() {
            *d = padded[x..x + kernel.len()]
                .iter()
                .zip(kernel)
                .map(|(a, k)| a * k)
                .sum();
        }
    }
    out
}

fn transpose(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = data[y * width + x];
        }
    }
    out
}

/// Separable blur with a discretely normalized Gaussian and replicate borders.
pub fn gaussian_blur(img: &BandBuf, sigma: f64) -> Result<BandBuf> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(separable_filter(img, &kernel))
}

pub(crate) fn separable_filter(img: &BandBuf, kernel: &[f64]) -> BandBuf {
    let (w, h) = img.size();
    let rows = convolve_rows(&img.data, w, kernel);
    let cols = convolve_rows(&transpose(&rows, w, h), h, kernel);
    BandBuf {
        width: w,
        height: h,
        data: transpose(&cols, h, w),
    }
}

/// Box-average over `factor x factor` blocks; partial edge blocks average
/// the pixels they contain. Output size is `ceil(size / factor)`.
pub fn downsample(img: &BandBuf, factor: usize) -> Result<BandBuf> {
    if factor < 1 {
        return Err(Error::InvalidParameter("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.size();
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = BandBuf::zeros(ow, oh);
    for oy in 0..oh {
        let ys = oy * factor..((oy + 1) * factor).min(h);
        for ox in 0..ow {
            let xs = ox * factor..((ox + 1) * factor).min(w);
            let mut sum = 0.0;
            for y in ys.clone() {
                sum += img.data[y * w + xs.start..y * w + xs.end].iter().sum::<f64>();
            }
            out.set(ox, oy, sum / (ys.len() * xs.len()) as f64);
        }
    }
    Ok(out)
}

fn bilinear_axis(dst: usize, src: usize, scale: f64) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn bilinear(img: &BandBuf, size: (usize, usize), sx: f64, sy: f64) -> BandBuf {
    let (w, h) = size;
    let xs = bilinear_axis(w, img.width, sx);
    let ys = bilinear_axis(h, img.height, sy);
    let mut out = BandBuf::zeros(w, h);
    for (y, &(y0, y1, ty)) in ys.iter().enumerate() {
        for (x, &(x0, x1, tx)) in xs.iter().enumerate() {
            let top = img.get(x0, y0) * (1.0 - tx) + img.get(x1, y0) * tx;
            let bot = img.get(x0, y1) * (1.0 - tx) + img.get(x1, y1) * tx;
            out.set(x, y, top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Bilinear resize to exactly `size` (pixel-centre aligned).
pub fn upsample(img: &BandBuf, size: (usize, usize)) -> Result<BandBuf> {
    let (w, h) = size;
    if w == 0 || h == 0 || img.width == 0 || img.height == 0 {
        return Err(Error::InvalidParameter("upsample to zero size".into()));
    }
    if size == img.size() {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    Ok(bilinear(img, size, sx, sy))
}

/// Inverse of [`downsample`] for a known factor: block centres land on
/// their source positions even when the size was not divisible.
pub fn upsample_by(img: &BandBuf, factor: usize, size: (usize, usize)) -> Result<BandBuf> {
    if factor < 1 || size.0 == 0 || size.1 == 0 {
        return Err(Error::InvalidParameter("invalid upsample factor or size".into()));
    }
    if factor == 1 && size == img.size() {
        return Ok(img.clone());
    }
    let s = 1.0 / factor as f64;
    Ok(bilinear(img, size, s, s))
}

/// Downsample factors per band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScalePolicy {
    /// Band 0 at 1, band `l >= 1` at `2^(l-1)`, residual at `2^(n-1)`.
    #[default]
    Guarded,
    /// Band `l` at `2^l`, residual at `2^n`.
    Strict,
}

impl ScalePolicy {
    pub fn band_scale(self, level: usize) -> usize {
        match self {
            ScalePolicy::Guarded => 1 << level.saturating_sub(1),
            ScalePolicy::Strict => 1 << level,
        }
    }

    pub fn residual_scale(self, n_levels: usize) -> usize {
        match self {
            ScalePolicy::Guarded => 1 << n_levels.saturating_sub(1),
            ScalePolicy::Strict => 1 << n_levels,
        }
    }

    pub fn band_scales(self, n_levels: usize) -> Vec<usize> {
        (0..=n_levels).map(|l| self.band_scale(l)).collect()
    }
}

/// Bands `0..=n_levels` plus the low-pass residual, each stored at its
/// own downsampled resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPyramid {
    pub n_levels: usize,
    pub bands: Vec<BandBuf>,
    pub residual: BandBuf,
    pub band_scales: Vec<usize>,
    pub residual_scale: usize,
    pub source_size: (usize, usize),
}

/// Smallest side length accepted for `n_levels`.
pub fn min_size(n_levels: usize) -> usize {
    1usize << (n_levels + 1)
}

pub fn check_size(width: usize, height: usize, n_levels: usize) -> Result<()> {
    if n_levels > 24 {
        return Err(Error::InvalidParameter(format!(
            "n_levels {n_levels} is unreasonably large"
        )));
    }
    let min = min_size(n_levels);
    if width < min || height < min {
        return Err(Error::TooSmall {
            width,
            height,
            reason: format!("{n_levels} levels need at least {min}x{min} pixels"),
        });
    }
    Ok(())
}

/// Full-resolution bands and residual (no downsampling).
pub fn decompose_full(img: &BandBuf, n_levels: usize) -> Result<(Vec<BandBuf>, BandBuf)> {
    check_size(img.width, img.height, n_levels)?;
    // blurred[i] = G(2^(i+1)) * X
    let blurred = (1..=n_levels + 1)
        .into_par_iter()
        .map(|l| gaussian_blur(img, (1u64 << l) as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut bands = Vec::with_capacity(n_levels + 1);
    let mut upper = img;
    for lower in &blurred {
        bands.push(upper.zip_map(lower, |a, b| a - b)?);
        upper = lower;
    }
    let residual = blurred.into_iter().last().expect("at least one blur");
    Ok((bands, residual))
}

pub fn decompose(img: &BandBuf, n_levels: usize) -> Result<LaplacianPyramid> {
    decompose_with(img, n_levels, ScalePolicy::default())
}

pub fn decompose_with(
    img: &BandBuf,
    n_levels: usize,
    policy: ScalePolicy,
) -> Result<LaplacianPyramid> {
    let (full, residual) = decompose_full(img, n_levels)?;
    let band_scales = policy.band_scales(n_levels);
    let residual_scale = policy.residual_scale(n_levels);
    let bands = full
        .par_iter()
        .zip(&band_scales)
        .map(|(b, &s)| downsample(b, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(LaplacianPyramid {
        n_levels,
        bands,
        residual: downsample(&residual, residual_scale)?,
        band_scales,
        residual_scale,
        source_size: img.size(),
    })
}

fn expected_size(source: (usize, usize), scale: usize) -> (usize, usize) {
    (source.0.div_ceil(scale), source.1.div_ceil(scale))
}

/// Upsamples every band and the residual to the source size and sums them.
pub fn reconstruct(pyr: &LaplacianPyramid) -> Result<BandBuf> {
    if pyr.bands.len() != pyr.n_levels + 1 || pyr.band_scales.len() != pyr.bands.len() {
        return Err(Error::SizeMismatch(format!(
            "{} bands / {} scales for {} levels",
            pyr.bands.len(),
            pyr.band_scales.len(),
            pyr.n_levels
        )));
    }
    let layers = pyr
        .bands
        .iter()
        .zip(&pyr.band_scales)
        .chain(std::iter::once((&pyr.residual, &pyr.residual_scale)));
    let mut out = BandBuf::zeros(pyr.source_size.0, pyr.source_size.1);
    for (band, &scale) in layers {
        if scale == 0 || band.size() != expected_size(pyr.source_size, scale) {
            return Err(Error::SizeMismatch(format!(
                "band of size {:?} inconsistent with scale {scale} of {:?}",
                band.size(),
                pyr.source_size
            )));
        }
        let up = upsample_by(band, scale, pyr.source_size)?;
        for (o, v) in out.data.iter_mut().zip(&up.data) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{natural_band, psnr_band, random_band};
    use proptest::prelude::*;

    /// Direct dense 2-D convolution with clamped borders.
    fn dense_blur(img: &BandBuf, sigma: f64) -> BandBuf {
        let r = (3.0 * sigma).ceil() as isize;
        let mut taps = vec![];
        for dy in -r..=r {
            for dx in -r..=r {
                taps.push((dx, dy, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
            }
        }
        let norm: f64 = taps.iter().map(|t| t.2).sum();
        let mut out = BandBuf::zeros(img.width, img.height);
        for y in 0..img.height as isize {
            for x in 0..img.width as isize {
                let v: f64 = taps
                    .iter()
                    .map(|&(dx, dy, w)| w * img.get_clamped(x + dx, y + dy))
                    .sum();
                out.set(x as usize, y as usize, v / norm);
            }
        }
        out
    }

    #[test]
    fn kernel_is_normalized() {
        for s in [0.3, 1.0, 2.0, 7.5, 64.0] {
            let k = gaussian_kernel(s).unwrap();
            assert_eq!(k.len(), 2 * (3.0 * s).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn blur_preserves_constant() {
        let img = BandBuf::filled(17, 9, 0.37);
        let out = gaussian_blur(&img, 2.5).unwrap();
        assert!(out.data.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn impulse_response_matches_dense_convolution() {
        let mut img = BandBuf::zeros(33, 33);
        img.set(16, 16, 1.0);
        let out = gaussian_blur(&img, 2.0).unwrap();
        let k = gaussian_kernel(2.0).unwrap();
        let c = k[k.len() / 2];
        assert!((out.get(16, 16) - c * c).abs() < 1e-15);
        let oracle = dense_blur(&img, 2.0);
        for (a, b) in out.data.iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-12);
        }
        // also with border contact
        let nat = random_band(21, 13, 4);
        let a = gaussian_blur(&nat, 1.3).unwrap();
        let b = dense_blur(&nat, 1.3);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_composition_is_approximate() {
        let img = natural_band(64, 64, 7);
        let twice = gaussian_blur(&gaussian_blur(&img, 2.0).unwrap(), 2.0).unwrap();
        let once = gaussian_blur(&img, 8f64.sqrt()).unwrap();
        // replicate padding does not compose, so compare away from the border
        let mut diff: f64 = 0.0;
        for y in 12..52 {
            for x in 12..52 {
                diff = diff.max((twice.get(x, y) - once.get(x, y)).abs());
            }
        }
        assert!(diff < 2e-3, "max diff {diff}");
    }

    #[test]
    fn blur_is_shift_equivariant_in_interior() {
        let mut a = BandBuf::zeros(40, 40);
        a.set(15, 18, 1.0);
        let mut b = BandBuf::zeros(40, 40);
        b.set(19, 21, 1.0);
        let ra = gaussian_blur(&a, 1.5).unwrap();
        let rb = gaussian_blur(&b, 1.5).unwrap();
        for dy in -5isize..=5 {
            for dx in -5isize..=5 {
                let va = ra.get((15 + dx) as usize, (18 + dy) as usize);
                let vb = rb.get((19 + dx) as usize, (21 + dy) as usize);
                assert!((va - vb).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn downsample_examples() {
        let img = random_band(7, 5, 1);
        assert_eq!(downsample(&img, 1).unwrap(), img);
        let chk = BandBuf::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(downsample(&chk, 2).unwrap().data, vec![0.5]);
        assert!(downsample(&img, 0).is_err());
        let d = downsample(&img, 2).unwrap();
        assert_eq!(d.size(), (4, 3));
        // partial corner block is the single pixel
        assert_eq!(d.get(3, 2), img.get(6, 4));
        assert!(upsample(&img, (0, 3)).is_err());
    }

    #[test]
    fn resample_round_trip_of_smooth_image() {
        let img = gaussian_blur(&natural_band(128, 128, 3), 4.0).unwrap();
        let rt = upsample(&downsample(&img, 2).unwrap(), img.size()).unwrap();
        let p = psnr_band(&img, &rt);
        assert!(p >= 40.0, "psnr {p}");
    }

    #[test]
    fn constant_image_has_zero_bands() {
        let img = BandBuf::filled(64, 64, 0.42);
        for n in 0..=4 {
            let pyr = decompose(&img, n).unwrap();
            assert_eq!(pyr.bands.len(), n + 1);
            for b in &pyr.bands {
                assert!(b.data.iter().all(|v| v.abs() < 1e-14));
            }
            assert!(pyr.residual.data.iter().all(|v| (v - 0.42).abs() < 1e-14));
            let rec = reconstruct(&pyr).unwrap();
            assert!(rec.data.iter().all(|v| (v - 0.42).abs() < 1e-10));
        }
    }

    #[test]
    fn five_levels_give_six_bands() {
        let img = natural_band(64, 64, 2);
        let pyr = decompose(&img, 5).unwrap();
        assert_eq!(pyr.bands.len(), 6);
        assert_eq!(pyr.band_scales, vec![1, 1, 2, 4, 8, 16]);
        assert_eq!(pyr.residual_scale, 16);
        assert_eq!(pyr.bands[5].size(), (4, 4));
        let strict = ScalePolicy::Strict.band_scales(5);
        assert_eq!(strict, vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn too_small_for_levels() {
        let img = BandBuf::zeros(63, 64);
        assert!(matches!(decompose(&img, 5), Err(Error::TooSmall { .. })));
        assert!(decompose(&BandBuf::zeros(64, 64), 5).is_ok());
    }

    #[test]
    fn telescoping_at_full_resolution() {
        let img = random_band(64, 64, 11);
        let (bands, residual) = decompose_full(&img, 3).unwrap();
        let mut sum = residual.clone();
        for b in &bands {
            sum = sum.zip_map(b, |a, b| a + b).unwrap();
        }
        for (a, b) in sum.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zeroed_bands_reconstruct_to_residual() {
        let img = natural_band(64, 64, 5);
        let mut pyr = decompose(&img, 3).unwrap();
        for b in &mut pyr.bands {
            b.data.fill(0.0);
        }
        let rec = reconstruct(&pyr).unwrap();
        let up = upsample_by(&pyr.residual, pyr.residual_scale, (64, 64)).unwrap();
        assert_eq!(rec, up);
    }

    #[test]
    fn reconstruct_rejects_inconsistent_scales() {
        let img = natural_band(64, 64, 5);
        let mut pyr = decompose(&img, 3).unwrap();
        pyr.band_scales[2] = 1;
        assert!(matches!(reconstruct(&pyr), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn round_trip_of_natural_image() {
        let img = natural_band(256, 256, 9);
        let rec = reconstruct(&decompose(&img, 5).unwrap()).unwrap();
        let p = psnr_band(&img, &rec);
        assert!(p >= 40.0, "round trip psnr {p}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn decompose_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, s1 in 0u64..1000, s2 in 0u64..1000) {
            let x = random_band(32, 32, s1);
            let y = random_band(32, 32, s2);
            let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
            let px = decompose(&x, 3).unwrap();
            let py = decompose(&y, 3).unwrap();
            let pm = decompose(&mix, 3).unwrap();
            for l in 0..4 {
                for i in 0..pm.bands[l].data.len() {
                    let e = a * px.bands[l].data[i] + b * py.bands[l].data[i];
                    prop_assert!((pm.bands[l].data[i] - e).abs() < 1e-10);
                }
            }
        }
    }
}
