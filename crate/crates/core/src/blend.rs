//! Patch maps and full-image application.
//!
//! A [`BandMap`] sends a patch `x` to `sum_k f_k(x) A_k x`, with `f(x)` on
//! the probability simplex from a [`WeightField`]. There is no bias term:
//! any offset has to come from the matrices acting on the patch.
//! [`RegressorMap`] is the ablation baseline that predicts the output patch
//! directly with the same three-layer network and a Leaky ReLU head.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::{rgb_to_ycbcr, ycbcr_to_rgb_pixel, BandBuf, ImageBuf};
use crate::mlp::{Head, Mlp, MlpTrace};
use crate::patch::{assemble_patches, extract_patches, Padding};
use crate::pyramid::{decompose_with, reconstruct, ScalePolicy};

/// Rows per block in batched evaluation and training.
pub(crate) const CHUNK_ROWS: usize = 512;

/// Standard deviation of the noise added to identity matrices at init.
pub const MATRIX_INIT_STD: f64 = 0.01;

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Blending weights over `K` matrices as a function of the patch.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    pub net: Mlp,
}

impl WeightField {
    pub fn init(d: usize, hidden: usize, k: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        Self {
            net: Mlp::init([d, hidden, hidden, k], leaky_slope, Head::Softmax, rng),
        }
    }

    pub fn zeros(d: usize, hidden: usize, k: usize, leaky_slope: f64) -> Self {
        Self {
            net: Mlp::zeros([d, hidden, hidden, k], leaky_slope, Head::Softmax),
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.net.dims()
    }

    pub fn k(&self) -> usize {
        self.net.dims()[3]
    }
}

/// `softmax(W3 lrelu(W2 lrelu(W1 x + b1) + b2) + b3)`.
pub fn field_weights(field: &WeightField, x: &[f64]) -> Result<Vec<f64>> {
    field.net.forward(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandMap {
    pub k: usize,
    pub d: usize,
    /// `K` row-major `d x d` matrices, back to back.
    pub matrices: Vec<f64>,
    pub field: WeightField,
}

impl BandMap {
    /// Identity matrices plus `N(0, 0.01^2)` noise; fan-in scaled uniform field.
    pub fn init(k: usize, d: usize, hidden: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        let noise = Normal::new(0.0, MATRIX_INIT_STD).expect("valid std");
        let mut matrices = identity_stack(k, d);
        for m in &mut matrices {
            *m += noise.sample(rng);
        }
        let field = WeightField::init(d, hidden, k, leaky_slope, rng);
        Self {
            k,
            d,
            matrices,
            field,
        }
    }

    /// Every `A_k = I` and an all-zero field.
    pub fn identity(k: usize, d: usize, hidden: usize, leaky_slope: f64) -> Self {
        Self {
            k,
            d,
            matrices: identity_stack(k, d),
            field: WeightField::zeros(d, hidden, k, leaky_slope),
        }
    }

    pub fn matrix(&self, k: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.matrices[k * dd..(k + 1) * dd]
    }

    pub fn param_count(&self) -> usize {
        self.matrices.len() + self.field.net.param_count()
    }

    pub fn check(&self) -> Result<()> {
        self.field.net.check_shapes()?;
        let [d, _, _, k] = self.field.dims();
        if d != self.d || k != self.k || self.matrices.len() != self.k * self.d * self.d {
            return Err(Error::Corrupt(format!(
                "band map with K={}, d={} has field dims {:?} and {} matrix entries",
                self.k,
                self.d,
                self.field.dims(),
                self.matrices.len()
            )));
        }
        Ok(())
    }

    /// `sum_k f_k(x) A_k x`.
    pub fn map_patch(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.d, x.len())?;
        let w = field_weights(&self.field, x)?;
        self.map_patch_with_weights(x, &w)
    }

    /// The blend with externally supplied weights.
    pub fn map_patch_with_weights(&self, x: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        check_len(self.d, x.len())?;
        check_len(self.k, weights.len())?;
        let d = self.d;
        let mut y = vec![0.0; d];
        for (k, fk) in weights.iter().enumerate() {
            for (i, yi) in y.iter_mut().enumerate() {
                let row = &self.matrix(k)[i * d..(i + 1) * d];
                *yi += fk * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(y)
    }

    /// The matrices as a `K x d^2` array, one flattened `A_k` per row.
    pub(crate) fn stacked(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.k, self.d * self.d), &self.matrices).expect("matrix stack")
    }

    /// Batched forward for a block of patches: the field trace and the
    /// output. Each patch's blended matrix `sum_k f_k A_k` is formed as one
    /// row of `F A`, then applied to the patch.
    pub(crate) fn forward_block(&self, x: ArrayView2<'_, f64>) -> (MlpTrace, Array2<f64>) {
        let d = self.d;
        let trace = self.field.net.forward_batch(x);
        let mut blended = Array2::zeros((x.nrows(), d * d));
        general_mat_mul(1.0, &trace.out, &self.stacked(), 0.0, &mut blended);
        let mut y = Array2::zeros((x.nrows(), d));
        for ((m, xr), mut yr) in blended.rows().into_iter().zip(x.rows()).zip(y.rows_mut()) {
            let m = m.as_slice().expect("standard layout");
            for (yi, row) in yr.iter_mut().zip(m.chunks_exact(d)) {
                *yi = row.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
            }
        }
        (trace, y)
    }
}

fn identity_stack(k: usize, d: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * d * d];
    for kk in 0..k {
        for i in 0..d {
            m[kk * d * d + i * d + i] = 1.0;
        }
    }
    m
}

/// Direct patch regressor, `lrelu(W3 lrelu(W2 lrelu(W1 x + b1) + b2) + b3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorMap {
    pub net: Mlp,
}

impl RegressorMap {
    pub fn init(d: usize, hidden: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        Self {
            net: Mlp::init([d, hidden, hidden, d], leaky_slope, Head::LeakyRelu, rng),
        }
    }

    pub fn zeros(d: usize, hidden: usize, leaky_slope: f64) -> Self {
        Self {
            net: Mlp::zeros([d, hidden, hidden, d], leaky_slope, Head::LeakyRelu),
        }
    }

    pub fn dim(&self) -> usize {
        self.net.dims()[0]
    }
}

pub fn map_patch_regressor(rm: &RegressorMap, x: &[f64]) -> Result<Vec<f64>> {
    rm.net.forward(x)
}

/// Per-band patch map of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum PatchMap {
    Blend(BandMap),
    Regressor(RegressorMap),
}

impl PatchMap {
    pub fn dim(&self) -> usize {
        match self {
            PatchMap::Blend(b) => b.d,
            PatchMap::Regressor(r) => r.dim(),
        }
    }

    /// Number of matrices; 0 for the regressor.
    pub fn k(&self) -> usize {
        match self {
            PatchMap::Blend(b) => b.k,
            PatchMap::Regressor(_) => 0,
        }
    }

    pub fn net(&self) -> &Mlp {
        match self {
            PatchMap::Blend(b) => &b.field.net,
            PatchMap::Regressor(r) => &r.net,
        }
    }

    pub fn hidden(&self) -> usize {
        self.net().dims()[1]
    }

    pub fn leaky_slope(&self) -> f64 {
        self.net().leaky_slope
    }

    pub fn param_count(&self) -> usize {
        match self {
            PatchMap::Blend(b) => b.param_count(),
            PatchMap::Regressor(r) => r.net.param_count(),
        }
    }

    pub fn map_patch(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            PatchMap::Blend(b) => b.map_patch(x),
            PatchMap::Regressor(r) => map_patch_regressor(r, x),
        }
    }

    /// Maps a row-major block of patches.
    pub fn map_batch(&self, patches: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if !patches.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d * (patches.len() / d + 1),
                actual: patches.len(),
            });
        }
        let mut out = vec![0.0; patches.len()];
        out.par_chunks_mut(CHUNK_ROWS * d)
            .zip(patches.par_chunks(CHUNK_ROWS * d))
            .for_each(|(dst, src)| {
                let x = ArrayView2::from_shape((src.len() / d, d), src).expect("block shape");
                let y = match self {
                    PatchMap::Blend(b) => b.forward_block(x).1,
                    PatchMap::Regressor(r) => r.net.forward_batch(x).out,
                };
                dst.copy_from_slice(y.as_slice().expect("standard layout"));
            });
        Ok(out)
    }

    /// Parameter slices: the matrices first (blend only), then W1, b1, ... b3.
    pub fn segments(&self) -> Vec<&[f64]> {
        match self {
            PatchMap::Blend(b) => {
                let mut s = vec![b.matrices.as_slice()];
                s.extend(b.field.net.segments());
                s
            }
            PatchMap::Regressor(r) => r.net.segments(),
        }
    }

    pub fn segments_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            PatchMap::Blend(b) => {
                let mut s = vec![b.matrices.as_mut_slice()];
                s.extend(b.field.net.segments_mut());
                s
            }
            PatchMap::Regressor(r) => r.net.segments_mut(),
        }
    }

    /// Same shapes, every parameter zero (used as a gradient container).
    pub fn zeros_like(&self) -> Self {
        match self {
            PatchMap::Blend(b) => PatchMap::Blend(BandMap {
                k: b.k,
                d: b.d,
                matrices: vec![0.0; b.matrices.len()],
                field: WeightField {
                    net: b.field.net.zeros_like(),
                },
            }),
            PatchMap::Regressor(r) => PatchMap::Regressor(RegressorMap {
                net: r.net.zeros_like(),
            }),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            PatchMap::Blend(b) => b.check(),
            PatchMap::Regressor(r) => {
                r.net.check_shapes()?;
                let [d, _, _, out] = r.net.dims();
                if d != out {
                    return Err(Error::Corrupt(format!("regressor maps {d} to {out}")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChannelMode {
    /// Learn luminance only; chroma is passed through.
    #[default]
    LumaOnly,
    /// Independent maps for Y, Cb and Cr.
    PerChannel,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::LumaOnly => 1,
            ChannelMode::PerChannel => 3,
        }
    }
}

/// One patch map per band per trained channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RetouchModel {
    pub n_levels: usize,
    pub patch_size: usize,
    pub channel_mode: ChannelMode,
    pub seed: u64,
    pub scale_policy: ScalePolicy,
    /// `maps[channel][band]`.
    pub maps: Vec<Vec<PatchMap>>,
}

impl RetouchModel {
    pub fn new(
        n_levels: usize,
        patch_size: usize,
        channel_mode: ChannelMode,
        seed: u64,
        maps: Vec<Vec<PatchMap>>,
    ) -> Result<Self> {
        let model = Self {
            n_levels,
            patch_size,
            channel_mode,
            seed,
            scale_policy: ScalePolicy::default(),
            maps,
        };
        model.validate()?;
        Ok(model)
    }

    /// Every band map is the identity (`A_k = I`).
    pub fn identity(
        n_levels: usize,
        patch_size: usize,
        k: usize,
        hidden: usize,
        channel_mode: ChannelMode,
    ) -> Result<Self> {
        let d = patch_size * patch_size;
        let maps = (0..channel_mode.channels())
            .map(|_| {
                (0..=n_levels)
                    .map(|_| PatchMap::Blend(BandMap::identity(k, d, hidden, 0.01)))
                    .collect()
            })
            .collect();
        Self::new(n_levels, patch_size, channel_mode, 0, maps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size.is_multiple_of(2) || self.patch_size == 0 {
            return Err(Error::InvalidParameter(format!(
                "patch size must be odd, got {}",
                self.patch_size
            )));
        }
        if self.maps.len() != self.channel_mode.channels() {
            return Err(Error::Corrupt(format!(
                "{} channel map sets for {:?}",
                self.maps.len(),
                self.channel_mode
            )));
        }
        let d = self.patch_size * self.patch_size;
        let first = self.first_map();
        for channel in &self.maps {
            if channel.len() != self.n_levels + 1 {
                return Err(Error::Corrupt(format!(
                    "{} band maps for {} levels",
                    channel.len(),
                    self.n_levels
                )));
            }
            for m in channel {
                m.check()?;
                if m.dim() != d
                    || m.k() != first.k()
                    || m.hidden() != first.hidden()
                    || m.leaky_slope() != first.leaky_slope()
                {
                    return Err(Error::Corrupt("band maps disagree in shape".into()));
                }
            }
        }
        Ok(())
    }

    pub fn first_map(&self) -> &PatchMap {
        &self.maps[0][0]
    }

    pub fn is_regressor(&self) -> bool {
        matches!(self.first_map(), PatchMap::Regressor(_))
    }

    pub fn param_count(&self) -> usize {
        self.maps.iter().flatten().map(PatchMap::param_count).sum()
    }

    pub fn band_scales(&self) -> Vec<usize> {
        self.scale_policy.band_scales(self.n_levels)
    }
}

/// Pushes one plane through decomposition, per-band patch maps and
/// reconstruction. The residual is left untouched.
pub fn apply_channel(
    maps: &[PatchMap],
    plane: &BandBuf,
    n_levels: usize,
    patch_size: usize,
    policy: ScalePolicy,
) -> Result<BandBuf> {
    let mut pyr = decompose_with(plane, n_levels, policy)?;
    pyr.bands = pyr
        .bands
        .par_iter()
        .zip(maps)
        .map(|(band, map)| {
            let mut ps = extract_patches(band, patch_size, 1, Padding::Replicate)?;
            ps.patches = map.map_batch(&ps.patches)?;
            assemble_patches(&ps)
        })
        .collect::<Result<Vec<_>>>()?;
    reconstruct(&pyr)
}

/// Applies the model to planes already in the model's colour space
/// (Y'CbCr or a single grey plane). Untrained planes are returned as-is.
pub fn apply_planes(model: &RetouchModel, planes: &[BandBuf]) -> Result<Vec<BandBuf>> {
    model.validate()?;
    planes
        .iter()
        .enumerate()
        .map(|(c, plane)| match model.maps.get(c) {
            Some(maps) => apply_channel(
                maps,
                plane,
                model.n_levels,
                model.patch_size,
                model.scale_policy,
            ),
            None => Ok(plane.clone()),
        })
        .collect()
}

/// Retouches an image. Colour input is processed in Y'CbCr and converted
/// back; the result is clamped to `[0, 1]`.
pub fn apply_model(model: &RetouchModel, img: &ImageBuf) -> Result<ImageBuf> {
    match img.channels() {
        1 => {
            let out = apply_planes(model, &[img.plane(0)])?;
            ImageBuf::from_planes(&out)
        }
        _ => {
            let ycc = rgb_to_ycbcr(img)?;
            let out = apply_planes(model, &ycc.planes())?;
            let (y, cb, cr) = (&out[0].data, &out[1].data, &out[2].data);
            let mut rgb = Vec::with_capacity(y.len() * 3);
            for i in 0..y.len() {
                rgb.extend_from_slice(&ycbcr_to_rgb_pixel(y[i], cb[i], cr[i]));
            }
            ImageBuf::from_clamped(img.width(), img.height(), 3, rgb)
        }
    }
}
