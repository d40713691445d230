//! Python bindings: images, filters, training, models and metrics.
//!
//! ```python
//! import retouch_py as rp
//! before = rp.Image.load("before.png")
//! after = rp.filter(before, "gaussian")
//! model, losses = rp.train(before, after, epochs=20)
//! out = model.apply(rp.Image.load("other.png"))
//! ```

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use retouch_core::pyramid::decompose;
use retouch_core::{
    apply_model, load_image, load_model, save_image, save_model, train_with_log, ChannelMode,
    Error, FilterSpec, ImageBuf, MapKind, RetouchModel, TrainConfig,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Read { .. } | Error::Write { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Image", module = "retouch_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    inner: ImageBuf,
}

#[pymethods]
impl PyImage {
    /// Interleaved row-major samples, nominally in `[0, 1]`.
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        ImageBuf::new(width, height, channels, data)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_image(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_image(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    /// BT.601 luma as a single-channel image.
    fn luma(&self) -> Self {
        Self {
            inner: self.inner.luma().to_image(),
        }
    }

    fn __repr__(&self) -> String {
        let (w, h, c) = self.inner.dims();
        format!("Image(width={w}, height={h}, channels={c})")
    }
}

#[pyclass(name = "Model", module = "retouch_py", frozen)]
pub struct PyModel {
    inner: RetouchModel,
}

fn channel_mode(per_channel: bool) -> ChannelMode {
    if per_channel {
        ChannelMode::PerChannel
    } else {
        ChannelMode::LumaOnly
    }
}

#[pymethods]
impl PyModel {
    /// Model whose band maps are all the identity.
    #[staticmethod]
    #[pyo3(signature = (n_levels=5, patch_size=3, k=4, hidden=32, per_channel=false))]
    fn identity(
        n_levels: usize,
        patch_size: usize,
        k: usize,
        hidden: usize,
        per_channel: bool,
    ) -> PyResult<Self> {
        RetouchModel::identity(n_levels, patch_size, k, hidden, channel_mode(per_channel))
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_model(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, path).map_err(to_py)
    }

    fn apply(&self, py: Python<'_>, image: &PyImage) -> PyResult<PyImage> {
        py.detach(|| apply_model(&self.inner, &image.inner))
            .map(|inner| PyImage { inner })
            .map_err(to_py)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.inner.n_levels
    }

    /// Matrices per band map; 0 for the regressor baseline.
    #[getter]
    fn k(&self) -> usize {
        self.inner.first_map().k()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn is_regressor(&self) -> bool {
        self.inner.is_regressor()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_levels={}, k={}, params={})",
            self.inner.n_levels,
            self.inner.first_map().k(),
            self.inner.param_count()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    k: usize,
    levels: usize,
    patch_size: usize,
    hidden: usize,
    lr: f64,
    decay: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    per_channel: bool,
    regressor: bool,
) -> PyResult<TrainConfig> {
    let cfg = TrainConfig {
        k,
        n_levels: levels,
        patch_size,
        hidden,
        lr,
        decay,
        epochs,
        batch,
        seed,
        channel_mode: channel_mode(per_channel),
        map_kind: if regressor { MapKind::Regressor } else { MapKind::Blend },
        ..TrainConfig::default()
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Learns the edit `before -> after`. Returns the model and the final
/// loss of every trained band.
#[pyfunction]
#[pyo3(signature = (
    before, after, *, k=256, levels=5, patch_size=3, hidden=32, lr=1e-2, decay=0.96,
    epochs=300, batch=4096, seed=0, per_channel=false, regressor=false
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    before: &PyImage,
    after: &PyImage,
    k: usize,
    levels: usize,
    patch_size: usize,
    hidden: usize,
    lr: f64,
    decay: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    per_channel: bool,
    regressor: bool,
) -> PyResult<(PyModel, Vec<f64>)> {
    let cfg = config(
        k, levels, patch_size, hidden, lr, decay, epochs, batch, seed, per_channel, regressor,
    )?;
    let (model, log) = py
        .detach(|| train_with_log(&before.inner, &after.inner, &cfg))
        .map_err(to_py)?;
    let losses = log.bands.iter().map(|b| b.final_loss).collect();
    Ok((PyModel { inner: model }, losses))
}

#[pyfunction]
#[pyo3(signature = (*, k=256, levels=5, patch_size=3, hidden=32, per_channel=false, regressor=false))]
fn parameter_count(
    k: usize,
    levels: usize,
    patch_size: usize,
    hidden: usize,
    per_channel: bool,
    regressor: bool,
) -> PyResult<usize> {
    let cfg = config(
        k, levels, patch_size, hidden, 1e-2, 0.96, 1, 1, 0, per_channel, regressor,
    )?;
    Ok(cfg.param_count())
}

/// Runs a named reference filter preset on every channel.
#[pyfunction]
fn filter(py: Python<'_>, image: &PyImage, preset: &str) -> PyResult<PyImage> {
    let spec = FilterSpec::preset(preset)
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset {preset:?}")))?;
    py.detach(|| spec.apply(&image.inner))
        .map(|inner| PyImage { inner })
        .map_err(to_py)
}

/// Luma PSNR in dB (peak 1); infinite for identical images.
#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    retouch_core::psnr(&a.inner.luma(), &b.inner.luma(), 1.0).map_err(to_py)
}

/// Luma SSIM.
#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    retouch_core::ssim(&a.inner.luma(), &b.inner.luma()).map_err(to_py)
}

/// Luma bands (signed, at their stored resolutions) and the residual.
#[pyfunction]
#[pyo3(signature = (image, levels=5))]
fn decompose_luma(image: &PyImage, levels: usize) -> PyResult<(Vec<PyImage>, PyImage)> {
    let pyr = decompose(&image.inner.luma(), levels).map_err(to_py)?;
    let bands = pyr
        .bands
        .iter()
        .map(|b| PyImage { inner: b.to_image() })
        .collect();
    Ok((bands, PyImage { inner: pyr.residual.to_image() }))
}

#[pymodule]
fn retouch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_count, m)?)?;
    m.add_function(wrap_pyfunction!(filter, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_luma, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
