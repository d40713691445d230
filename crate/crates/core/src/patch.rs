//! Overlapping square patches and overlap-average reassembly.
//!
//! Patches are enumerated row-major by centre and flattened row-major;
//! the matrices of a trained model depend on this order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::BandBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Only patches fully inside the band.
    Valid,
    /// One patch per grid position over the whole band, out-of-range
    /// cells filled from the nearest edge pixel.
    Replicate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    /// `rows * cols` patches of `patch_size^2` values, row-major.
    pub patches: Vec<f64>,
    pub patch_size: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    pub source_size: (usize, usize),
    pub padding: Padding,
}

impl PatchSet {
    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.patches[i * d..(i + 1) * d]
    }

    /// Centre pixel of grid cell (`row`, `col`).
    fn centre(&self, row: usize, col: usize) -> (usize, usize) {
        let off = match self.padding {
            Padding::Valid => self.patch_size / 2,
            Padding::Replicate => 0,
        };
        (col * self.stride + off, row * self.stride + off)
    }

    /// Grid index of the patch centred at (`cx`, `cy`), if there is one.
    fn grid_index(&self, cx: isize, cy: isize) -> Option<usize> {
        let off = match self.padding {
            Padding::Valid => (self.patch_size / 2) as isize,
            Padding::Replicate => 0,
        };
        let (gx, gy) = (cx - off, cy - off);
        let s = self.stride as isize;
        if gx < 0 || gy < 0 || gx % s != 0 || gy % s != 0 {
            return None;
        }
        let (col, row) = ((gx / s) as usize, (gy / s) as usize);
        (col < self.cols && row < self.rows).then_some(row * self.cols + col)
    }
}

fn grid_shape(
    size: (usize, usize),
    patch_size: usize,
    stride: usize,
    padding: Padding,
) -> (usize, usize) {
    let (w, h) = size;
    match padding {
        Padding::Valid => ((h - patch_size) / stride + 1, (w - patch_size) / stride + 1),
        Padding::Replicate => (h.div_ceil(stride), w.div_ceil(stride)),
    }
}

pub fn extract_patches(
    band: &BandBuf,
    patch_size: usize,
    stride: usize,
    padding: Padding,
) -> Result<PatchSet> {
    if patch_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "patch size must be odd, got {patch_size}"
        )));
    }
    if stride < 1 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    if padding == Padding::Valid && (band.width < patch_size || band.height < patch_size) {
        return Err(Error::TooSmall {
            width: band.width,
            height: band.height,
            reason: format!("no valid {patch_size}x{patch_size} patch fits"),
        });
    }
    let (rows, cols) = grid_shape(band.size(), patch_size, stride, padding);
    let d = patch_size * patch_size;
    let half = (patch_size / 2) as isize;
    let mut set = PatchSet {
        patches: vec![0.0; rows * cols * d],
        patch_size,
        stride,
        rows,
        cols,
        source_size: band.size(),
        padding,
    };
    let geometry = set.clone_geometry();
    set.patches
        .par_chunks_mut(cols * d)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, patch) in out.chunks_exact_mut(d).enumerate() {
                let (cx, cy) = geometry.centre(row, col);
                let mut i = 0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        patch[i] = band.get_clamped(cx as isize + dx, cy as isize + dy);
                        i += 1;
                    }
                }
            }
        });
    Ok(set)
}

impl PatchSet {
    fn clone_geometry(&self) -> PatchSet {
        PatchSet {
            patches: Vec::new(),
            ..*self
        }
    }
}

/// Averages every in-bounds patch cell onto the pixel it covers. Pixels
/// no patch touches are zero.
pub fn assemble_patches(ps: &PatchSet) -> Result<BandBuf> {
    let d = ps.dim();
    if ps.patch_size.is_multiple_of(2) || ps.stride == 0 {
        return Err(Error::InvalidParameter("invalid patch geometry".into()));
    }
    let (w, h) = ps.source_size;
    let expected = (ps.rows, ps.cols);
    if (w, h) == (0, 0)
        || (ps.padding == Padding::Valid && (w < ps.patch_size || h < ps.patch_size))
        || grid_shape((w, h), ps.patch_size, ps.stride, ps.padding) != expected
        || ps.patches.len() != ps.rows * ps.cols * d
    {
        return Err(Error::SizeMismatch(format!(
            "{} values for a {}x{} grid of {}-vectors over {w}x{h}",
            ps.patches.len(),
            ps.rows,
            ps.cols,
            d
        )));
    }
    let half = (ps.patch_size / 2) as isize;
    let mut out = BandBuf::zeros(w, h);
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                let mut sum = 0.0;
                let mut count = 0usize;
                // fixed visiting order keeps the sum deterministic
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (cx, cy) = (x as isize - dx, y as isize - dy);
                        if let Some(idx) = ps.grid_index(cx, cy) {
                            let cell = ((dy + half) * ps.patch_size as isize + dx + half) as usize;
                            sum += ps.patches[idx * d + cell];
                            count += 1;
                        }
                    }
                }
                *px = if count > 0 { sum / count as f64 } else { 0.0 };
            }
        });
    Ok(out)
}
