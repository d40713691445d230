//! Per-band training under the mean l1 patch loss.
//!
//! Gradients are derived by hand for exactly this architecture. For a patch
//! `x` with output `y = sum_k f_k A_k x` and upstream gradient `g = dL/dy`:
//!
//! ```text
//! dL/dA_k = f_k g x^T
//! dL/df_k = <g, A_k x>
//! ```
//!
//! and `dL/df` continues through the softmax Jacobian and the Leaky ReLU
//! layers of the weight field. Batches are split into fixed blocks whose
//! partial gradients are summed in block order, so results do not depend on
//! thread scheduling.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blend::{
    BandMap, ChannelMode, PatchMap, RegressorMap, RetouchModel, WeightField, CHUNK_ROWS,
};
use crate::error::{Error, Result};
use crate::image_io::{rgb_to_ycbcr, BandBuf, ImageBuf};
use crate::mlp::Mlp;
use crate::patch::{extract_patches, Padding};
use crate::pyramid::{decompose_with, ScalePolicy};

/// Which patch map each band learns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MapKind {
    #[default]
    Blend,
    /// Direct MLP regression of the output patch (ablation baseline).
    Regressor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub n_levels: usize,
    pub patch_size: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub decay: f64,
    pub epochs: usize,
    /// Patches per optimizer step.
    pub batch: usize,
    pub seed: u64,
    pub leaky_slope: f64,
    pub channel_mode: ChannelMode,
    pub adam: AdamParams,
    pub map_kind: MapKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 256,
            n_levels: 5,
            patch_size: 3,
            hidden: 32,
            lr: 1e-2,
            decay: 0.96,
            epochs: 300,
            batch: 4096,
            seed: 0,
            leaky_slope: 0.01,
            channel_mode: ChannelMode::LumaOnly,
            adam: AdamParams::default(),
            map_kind: MapKind::Blend,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden width must be at least 1".into());
        }
        if self.patch_size.is_multiple_of(2) {
            return bad(format!("patch size must be odd, got {}", self.patch_size));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky slope must lie in [0, 1), got {}", self.leaky_slope));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch as i32)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Weights per band map:
    /// `K d^2 + (d H + H) + (H^2 + H) + (H K + K)` for the blend model and
    /// `(d H + H) + (H^2 + H) + (H d + d)` for the regressor.
    pub fn params_per_band(&self) -> usize {
        let (d, h) = (self.patch_dim(), self.hidden);
        match self.map_kind {
            MapKind::Blend => self.k * d * d + (d * h + h) + (h * h + h) + (h * self.k + self.k),
            MapKind::Regressor => (d * h + h) + (h * h + h) + (h * d + d),
        }
    }

    /// `params_per_band * (n_L + 1) * channels`.
    pub fn param_count(&self) -> usize {
        self.params_per_band() * (self.n_levels + 1) * self.channel_mode.channels()
    }

    fn init_map(&self, rng: &mut ChaCha8Rng) -> PatchMap {
        let d = self.patch_dim();
        match self.map_kind {
            MapKind::Blend => {
                PatchMap::Blend(BandMap::init(self.k, d, self.hidden, self.leaky_slope, rng))
            }
            MapKind::Regressor => {
                PatchMap::Regressor(RegressorMap::init(d, self.hidden, self.leaky_slope, rng))
            }
        }
    }
}

/// Aligned input/target patches of one band of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPairSet {
    /// `N x d`, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: usize,
    pub band: usize,
    pub channel: usize,
}

impl PatchPairSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize, band: usize, channel: usize) -> Result<Self> {
        if d == 0 || !x.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(Self {
            x,
            y,
            d,
            band,
            channel,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_patch(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y_patch(&self, i: usize) -> &[f64] {
        &self.y[i * self.d..(i + 1) * self.d]
    }
}

/// The planes a model of the given mode is trained on.
pub fn training_planes(img: &ImageBuf, mode: ChannelMode) -> Result<Vec<BandBuf>> {
    match (img.channels(), mode) {
        (1, ChannelMode::LumaOnly) => Ok(vec![img.plane(0)]),
        (1, ChannelMode::PerChannel) => Err(Error::InvalidParameter(
            "per-channel training needs a colour pair".into(),
        )),
        (3, ChannelMode::LumaOnly) => Ok(vec![rgb_to_ycbcr(img)?.plane(0)]),
        (3, ChannelMode::PerChannel) => Ok(rgb_to_ycbcr(img)?.planes()),
        (c, _) => Err(Error::ChannelCount {
            expected: 3,
            actual: c,
        }),
    }
}

/// Decomposes both images identically and pairs valid-mode stride-1
/// patches position by position. Sets are ordered channel-major.
pub fn build_dataset(
    before: &ImageBuf,
    after: &ImageBuf,
    cfg: &TrainConfig,
) -> Result<Vec<PatchPairSet>> {
    if before.dims() != after.dims() {
        return Err(Error::Misaligned {
            before: before.dims(),
            after: after.dims(),
        });
    }
    let xb = training_planes(before, cfg.channel_mode)?;
    let yb = training_planes(after, cfg.channel_mode)?;
    let mut sets = Vec::new();
    for (channel, (xp, yp)) in xb.iter().zip(&yb).enumerate() {
        let px = decompose_with(xp, cfg.n_levels, ScalePolicy::default())?;
        let py = decompose_with(yp, cfg.n_levels, ScalePolicy::default())?;
        for (band, (bx, by)) in px.bands.iter().zip(&py.bands).enumerate() {
            let sx = extract_patches(bx, cfg.patch_size, 1, Padding::Valid)?;
            let sy = extract_patches(by, cfg.patch_size, 1, Padding::Valid)?;
            let d = sx.dim();
            sets.push(PatchPairSet::new(sx.patches, sy.patches, d, band, channel)?);
        }
    }
    Ok(sets)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(sum |p - t| / d, sign(p - t) / d)` with `sign(0) = 0`.
pub fn l1_loss_and_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            actual: target.len(),
        });
    }
    let d = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            loss += r.abs();
            sign(r) / d
        })
        .collect();
    Ok((loss / d, grad))
}

/// Per-block gradient accumulator.
enum BlockGrad {
    Blend { stack: Array2<f64>, field: Mlp },
    Regressor { net: Mlp },
}

impl BlockGrad {
    fn zeros(map: &PatchMap) -> Self {
        match map {
            PatchMap::Blend(b) => BlockGrad::Blend {
                stack: Array2::zeros((b.k, b.d * b.d)),
                field: b.field.net.zeros_like(),
            },
            PatchMap::Regressor(r) => BlockGrad::Regressor {
                net: r.net.zeros_like(),
            },
        }
    }

    fn add(&mut self, other: &BlockGrad) {
        match (self, other) {
            (BlockGrad::Blend { stack, field }, BlockGrad::Blend { stack: s2, field: f2 }) => {
                *stack += s2;
                field.add_assign(f2);
            }
            (BlockGrad::Regressor { net }, BlockGrad::Regressor { net: n2 }) => net.add_assign(n2),
            _ => unreachable!("block gradients of one map share a kind"),
        }
    }

    fn into_map(self, map: &PatchMap) -> PatchMap {
        match (self, map) {
            (BlockGrad::Blend { stack, field }, PatchMap::Blend(b)) => PatchMap::Blend(BandMap {
                k: b.k,
                d: b.d,
                matrices: stack.into_raw_vec_and_offset().0,
                field: WeightField { net: field },
            }),
            (BlockGrad::Regressor { net }, PatchMap::Regressor(_)) => {
                PatchMap::Regressor(RegressorMap { net })
            }
            _ => unreachable!("block gradients of one map share a kind"),
        }
    }
}

/// Fills `g` with `scale * sign(pred - target)` and returns `sum |pred - target|`.
fn residual_signs(
    pred: &Array2<f64>,
    target: ArrayView2<'_, f64>,
    scale: f64,
    g: &mut Array2<f64>,
) -> f64 {
    let mut sum = 0.0;
    ndarray::Zip::from(g).and(pred).and(target).for_each(|g, p, t| {
        let r = p - t;
        sum += r.abs();
        *g = scale * sign(r);
    });
    sum
}

fn block_backward(
    map: &PatchMap,
    x: ArrayView2<'_, f64>,
    t: ArrayView2<'_, f64>,
    scale: f64,
) -> (f64, BlockGrad) {
    let mut grad = BlockGrad::zeros(map);
    let mut g = Array2::zeros(x.raw_dim());
    let loss = match (map, &mut grad) {
        (PatchMap::Blend(b), BlockGrad::Blend { stack, field }) => {
            let d = b.d;
            let (trace, y) = b.forward_block(x);
            let loss = residual_signs(&y, t, scale, &mut g);
            // outer[c, i d + j] = g_ci x_cj, so that
            // dA = F^T outer and dF = outer A^T
            let mut outer = Array2::zeros((x.nrows(), d * d));
            for ((mut o, gr), xr) in outer.rows_mut().into_iter().zip(g.rows()).zip(x.rows()) {
                let o = o.as_slice_mut().expect("standard layout");
                for (orow, gi) in o.chunks_exact_mut(d).zip(gr.iter()) {
                    orow.iter_mut().zip(xr.iter()).for_each(|(a, xj)| *a = gi * xj);
                }
            }
            general_mat_mul(1.0, &trace.out.t(), &outer, 1.0, stack);
            let mut df = Array2::zeros((x.nrows(), b.k));
            general_mat_mul(1.0, &outer, &b.stacked().t(), 0.0, &mut df);
            b.field.net.backward_batch(x, &trace, df.view(), field);
            loss
        }
        (PatchMap::Regressor(r), BlockGrad::Regressor { net }) => {
            let trace = r.net.forward_batch(x);
            let loss = residual_signs(&trace.out, t, scale, &mut g);
            r.net.backward_batch(x, &trace, g.view(), net);
            loss
        }
        _ => unreachable!(),
    };
    (loss, grad)
}

/// Mean l1 loss over a batch of patch pairs and its exact gradient with
/// respect to every parameter of `map`, returned as a map of the same shape.
pub fn backward(map: &PatchMap, x: &[f64], y: &[f64]) -> Result<(f64, PatchMap)> {
    let d = map.dim();
    if x.len() != y.len() || !x.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len() / d;
    if n == 0 {
        return Ok((0.0, map.zeros_like()));
    }
    let scale = 1.0 / (d * n) as f64;
    let blocks: Vec<(f64, BlockGrad)> = x
        .par_chunks(CHUNK_ROWS * d)
        .zip(y.par_chunks(CHUNK_ROWS * d))
        .map(|(xs, ys)| {
            let rows = xs.len() / d;
            let xv = ArrayView2::from_shape((rows, d), xs).expect("block shape");
            let yv = ArrayView2::from_shape((rows, d), ys).expect("block shape");
            block_backward(map, xv, yv, scale)
        })
        .collect();
    let mut iter = blocks.into_iter();
    let (mut loss, mut grad) = iter.next().expect("at least one block");
    for (l, g) in iter {
        loss += l;
        grad.add(&g);
    }
    Ok((loss * scale, grad.into_map(map)))
}

/// Mean l1 loss of `map` on a batch.
pub fn mean_loss(map: &PatchMap, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let pred = map.map_batch(x)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / x.len() as f64)
}

/// First and second moments for every parameter, flattened in segment order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: Vec<&mut [f64]>,
    grads: Vec<&[f64]>,
    state: &mut AdamState,
    lr_t: f64,
    hp: &AdamParams,
) -> Result<()> {
    let np: usize = params.iter().map(|p| p.len()).sum();
    let shapes_agree = params.len() == grads.len()
        && params.iter().zip(&grads).all(|(p, g)| p.len() == g.len());
    if !shapes_agree || np != state.m.len() || np != state.v.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            actual: np,
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let (m_all, v_all) = (&mut state.m, &mut state.v);
    let mut offset = 0;
    for (p, g) in params.into_iter().zip(grads) {
        let m = &mut m_all[offset..offset + p.len()];
        let v = &mut v_all[offset..offset + p.len()];
        offset += p.len();
        for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m).zip(v) {
            *mi = hp.beta1 * *mi + (1.0 - hp.beta1) * gi;
            *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= lr_t * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Patch-weighted mean of the mini-batch losses seen during the epoch.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandLog {
    pub channel: usize,
    pub band: usize,
    pub patches: usize,
    pub epochs: Vec<EpochRecord>,
    /// Mean loss of the returned map over the whole band.
    pub final_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub bands: Vec<BandLog>,
}

impl TrainLog {
    /// One `key=value` line per epoch per band, then one summary line per band.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for b in &self.bands {
            for e in &b.epochs {
                lines.push(format!(
                    "epoch={} channel={} band={} lr={:.6e} loss={:.9e}",
                    e.epoch, b.channel, b.band, e.lr, e.loss
                ));
            }
        }
        for b in &self.bands {
            lines.push(format!(
                "final channel={} band={} patches={} loss={:.9e}",
                b.channel, b.band, b.patches, b.final_loss
            ));
        }
        lines
    }
}

/// Generator for one band: the config seed, with the stream selected by
/// channel and band so every band draws an independent sequence.
pub fn band_rng(seed: u64, channel: usize, band: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((channel as u64) << 32) | band as u64);
    rng
}

/// Fits one band map. Mini-batches are drawn from a fresh shuffle every
/// epoch; the last partial batch is kept.
pub fn train_band(pairs: &PatchPairSet, cfg: &TrainConfig) -> Result<(PatchMap, BandLog)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset {
            channel: pairs.channel,
            band: pairs.band,
        });
    }
    if pairs.d != cfg.patch_dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.patch_dim(),
            actual: pairs.d,
        });
    }
    let d = pairs.d;
    let n = pairs.len();
    let mut rng = band_rng(cfg.seed, pairs.channel, pairs.band);
    let mut map = cfg.init_map(&mut rng);
    let mut adam = AdamState::new(map.param_count());
    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(cfg.batch.min(n) * d);
    let mut by = Vec::with_capacity(cfg.batch.min(n) * d);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr_t = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for idx in order.chunks(cfg.batch) {
            bx.clear();
            by.clear();
            for &i in idx {
                bx.extend_from_slice(pairs.x_patch(i));
                by.extend_from_slice(pairs.y_patch(i));
            }
            let (loss, grad) = backward(&map, &bx, &by)?;
            weighted += loss * idx.len() as f64;
            adam_step(map.segments_mut(), grad.segments(), &mut adam, lr_t, &cfg.adam)?;
        }
        epochs.push(EpochRecord {
            epoch,
            lr: lr_t,
            loss: weighted / n as f64,
        });
    }
    let final_loss = mean_loss(&map, &pairs.x, &pairs.y)?;
    let log = BandLog {
        channel: pairs.channel,
        band: pairs.band,
        patches: n,
        epochs,
        final_loss,
    };
    Ok((map, log))
}

/// Learns a full model from one aligned pair; returns it with the training log.
pub fn train_with_log(
    before: &ImageBuf,
    after: &ImageBuf,
    cfg: &TrainConfig,
) -> Result<(RetouchModel, TrainLog)> {
    cfg.validate()?;
    let sets = build_dataset(before, after, cfg)?;
    let fitted: Vec<(PatchMap, BandLog)> = sets
        .par_iter()
        .map(|s| train_band(s, cfg))
        .collect::<Result<_>>()?;
    let per_channel = cfg.n_levels + 1;
    let mut maps: Vec<Vec<PatchMap>> = Vec::new();
    let mut log = TrainLog::default();
    for (i, (map, band_log)) in fitted.into_iter().enumerate() {
        if i % per_channel == 0 {
            maps.push(Vec::with_capacity(per_channel));
        }
        maps.last_mut().expect("channel started").push(map);
        log.bands.push(band_log);
    }
    let model = RetouchModel::new(cfg.n_levels, cfg.patch_size, cfg.channel_mode, cfg.seed, maps)?;
    Ok((model, log))
}

pub fn train(before: &ImageBuf, after: &ImageBuf, cfg: &TrainConfig) -> Result<RetouchModel> {
    train_with_log(before, after, cfg).map(|(m, _)| m)
}

/// Denominator floor for relative gradient errors, so entries that are
/// zero up to rounding do not dominate the report.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Default probe step. Smaller steps are dominated by rounding in the loss
/// evaluation, which scales like `1e-16 / h` against gradients near the floor.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub checked: usize,
    /// Parameters whose `+-h` probes straddle a kink of `|.|` or Leaky ReLU.
    pub excluded: usize,
}

/// Loss plus the sign pattern of every residual and every Leaky ReLU
/// pre-activation. Two points with the same pattern lie on one smooth piece.
fn loss_and_pattern(map: &PatchMap, x: &[f64], y: &[f64]) -> (f64, Vec<i8>) {
    let d = map.dim();
    let n = x.len() / d;
    let xv = ArrayView2::from_shape((n, d), x).expect("batch shape");
    let (pred, trace) = match map {
        PatchMap::Blend(b) => {
            let (trace, pred) = b.forward_block(xv);
            (pred, trace)
        }
        PatchMap::Regressor(r) => {
            let trace = r.net.forward_batch(xv);
            (trace.out.clone(), trace)
        }
    };
    let mut pattern = Vec::new();
    let mut loss = 0.0;
    for (p, t) in pred.iter().zip(y) {
        loss += (p - t).abs();
        pattern.push(sign(p - t) as i8);
    }
    let mut pres = vec![&trace.pre1, &trace.pre2];
    if matches!(map, PatchMap::Regressor(_)) {
        pres.push(&trace.pre3);
    }
    for pre in pres {
        pattern.extend(pre.iter().map(|v| (*v > 0.0) as i8));
    }
    (loss / (n * d) as f64, pattern)
}

/// Compares [`backward`] against central differences with step `h` on every
/// parameter, skipping parameters whose probes cross a kink.
pub fn grad_check_report(map: &PatchMap, x: &[f64], y: &[f64], h: f64) -> Result<GradCheckReport> {
    let (_, analytic) = backward(map, x, y)?;
    let analytic: Vec<f64> = analytic.segments().concat();
    let mut probe = map.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
        checked: 0,
        excluded: 0,
    };
    let lens: Vec<usize> = map.segments().iter().map(|s| s.len()).collect();
    let mut flat = 0;
    for (s, len) in lens.into_iter().enumerate() {
        for i in 0..len {
            let orig = probe.segments()[s][i];
            probe.segments_mut()[s][i] = orig + h;
            let (lp, pp) = loss_and_pattern(&probe, x, y);
            probe.segments_mut()[s][i] = orig - h;
            let (lm, pm) = loss_and_pattern(&probe, x, y);
            probe.segments_mut()[s][i] = orig;
            let a = analytic[flat];
            flat += 1;
            if pp != pm {
                report.excluded += 1;
                continue;
            }
            let num = (lp - lm) / (2.0 * h);
            let abs = (a - num).abs();
            let rel = abs / a.abs().max(num.abs()).max(GRAD_CHECK_FLOOR);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
            report.max_abs_numeric = report.max_abs_numeric.max(num.abs());
        }
    }
    Ok(report)
}

/// Worst relative error of [`grad_check_report`].
pub fn grad_check(map: &PatchMap, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    grad_check_report(map, x, y, h).map(|r| r.max_rel_error)
}
