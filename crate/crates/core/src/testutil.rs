//! Deterministic synthetic rasters shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image_io::{BandBuf, ImageBuf};
use crate::pyramid::gaussian_blur;

pub fn random_band(w: usize, h: usize, seed: u64) -> BandBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BandBuf {
        width: w,
        height: h,
        data: (0..w * h).map(|_| rng.random::<f64>()).collect(),
    }
}

/// Multi-octave smoothed noise plus a few hard edges, scaled into `[0.05, 0.95]`.
pub fn natural_band(w: usize, h: usize, seed: u64) -> BandBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = BandBuf::zeros(w, h);
    for (i, sigma) in [0.7, 1.5, 3.0, 6.0, 12.0].iter().enumerate() {
        let noise = random_band(w, h, seed.wrapping_mul(31).wrapping_add(i as u64));
        let smooth = gaussian_blur(&noise, *sigma).unwrap();
        let amp = sigma.sqrt();
        for (a, v) in acc.data.iter_mut().zip(&smooth.data) {
            *a += amp * (v - 0.5);
        }
    }
    for _ in 0..4 {
        let (cx, cy) = (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
        let r = rng.random_range(4.0..(w.min(h) as f64 / 3.0));
        let step = rng.random_range(-0.3..0.3);
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < r {
                    acc.data[y * w + x] += step;
                }
            }
        }
    }
    let lo = acc.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    acc.map(|v| 0.05 + 0.9 * (v - lo) / (hi - lo).max(1e-12))
}

pub fn natural_image(w: usize, h: usize, seed: u64) -> ImageBuf {
    natural_band(w, h, seed).to_image()
}

pub fn psnr_band(a: &BandBuf, b: &BandBuf) -> f64 {
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.data.len() as f64;
    10.0 * (1.0 / mse).log10()
}
