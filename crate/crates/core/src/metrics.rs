//! Image quality metrics and the Fourier-difference visualization.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image_io::{BandBuf, ImageBuf};
use crate::pyramid::gaussian_kernel;

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )))
    }
}

fn psnr_samples(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak^2 / MSE)`; identical inputs give `+inf`.
pub fn psnr(a: &BandBuf, b: &BandBuf, peak: f64) -> Result<f64> {
    check_same(a.size(), b.size())?;
    Ok(psnr_samples(&a.data, &b.data, peak))
}

/// PSNR over every sample of every channel.
pub fn psnr_image(a: &ImageBuf, b: &ImageBuf, peak: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::SizeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(psnr_samples(a.data(), b.data(), peak))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Separable correlation with `taps`, keeping only fully covered positions.
fn filter_valid(data: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (vw, vh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; vw * h];
    for y in 0..h {
        for x in 0..vw {
            rows[y * vw + x] = taps.iter().zip(&data[y * w + x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            out[y * vw + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * vw + x]).sum();
        }
    }
    (out, vw, vh)
}

/// Mean structural similarity over all valid 11x11 Gaussian windows
/// (sigma 1.5, peak 1).
pub fn ssim(a: &BandBuf, b: &BandBuf) -> Result<f64> {
    check_same(a.size(), b.size())?;
    let (w, h) = a.size();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            reason: format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"),
        });
    }
    let taps = gaussian_kernel(SSIM_SIGMA)?;
    let r = taps.len() / 2 - SSIM_WINDOW / 2;
    let taps = &taps[r..taps.len() - r];
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();

    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect()
    };
    let (mu_a, _, _) = filter_valid(&a.data, w, h, &taps);
    let (mu_b, _, _) = filter_valid(&b.data, w, h, &taps);
    let (aa, _, _) = filter_valid(&prod(&|x, _| x * x), w, h, &taps);
    let (bb, _, _) = filter_valid(&prod(&|_, y| y * y), w, h, &taps);
    let (ab, _, _) = filter_valid(&prod(&|x, y| x * y), w, h, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(total / mu_a.len() as f64)
}

/// 2-D DFT of a real plane, row-major.
pub fn fft2(band: &BandBuf) -> Vec<Complex<f64>> {
    let (w, h) = band.size();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut data: Vec<Complex<f64>> = band.data.iter().map(|v| Complex::new(*v, 0.0)).collect();
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    data
}

pub const FFT_DIFF_FLOOR: f64 = 1.0;
pub const FFT_DIFF_CEIL: f64 = 1e5;

/// `| |F(255 a)| - |F(255 b)| |`, zero frequency moved to the centre and
/// clamped to `[1, 1e5]`.
pub fn fft_diff_magnitude(a: &BandBuf, b: &BandBuf) -> Result<BandBuf> {
    check_same(a.size(), b.size())?;
    let (w, h) = a.size();
    let fa = fft2(&a.map(|v| 255.0 * v));
    let fb = fft2(&b.map(|v| 255.0 * v));
    let mut out = BandBuf::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = (fa[i].norm() - fb[i].norm()).abs().clamp(FFT_DIFF_FLOOR, FFT_DIFF_CEIL);
            out.set((x + w / 2) % w, (y + h / 2) % h, d);
        }
    }
    Ok(out)
}

/// [`fft_diff_magnitude`] mapped to `[0, 1]` by `log10(D) / 5`.
pub fn fft_diff(a: &BandBuf, b: &BandBuf) -> Result<BandBuf> {
    Ok(fft_diff_magnitude(a, b)?.map(|d| d.log10() / 5.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub images: Vec<ImageScore>,
}

impl EvalReport {
    pub fn push(&mut self, name: impl Into<String>, output: &BandBuf, reference: &BandBuf) -> Result<()> {
        self.images.push(ImageScore {
            name: name.into(),
            psnr_db: psnr(output, reference, 1.0)?,
            ssim: ssim(output, reference)?,
        });
        Ok(())
    }

    /// Mean of the per-image PSNRs.
    pub fn psnr_db(&self) -> f64 {
        self.images.iter().map(|s| s.psnr_db).sum::<f64>() / self.images.len() as f64
    }

    pub fn ssim(&self) -> f64 {
        self.images.iter().map(|s| s.ssim).sum::<f64>() / self.images.len() as f64
    }

    /// `name PSNR_dB=<f> SSIM=<f>` per image, then a `MEAN` line.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .images
            .iter()
            .map(|s| format!("{} PSNR_dB={:.4} SSIM={:.6}", s.name, s.psnr_db, s.ssim))
            .collect();
        lines.push(format!("MEAN PSNR_dB={:.4} SSIM={:.6}", self.psnr_db(), self.ssim()));
        lines
    }
}
