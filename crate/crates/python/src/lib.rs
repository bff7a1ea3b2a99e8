//! Python bindings. Videos are float64 arrays laid out `(T, C, H, W)`,
//! flows are `(T - 1, H, W, 2)` arrays of `(dy, dx)` and masks are boolean
//! `(T - 1, H, W)` arrays with `True` marking occluded pixels.

use std::path::PathBuf;

use flowmed::io::{self, Tensor};
use flowmed::{
    Autoencoder, AvgPoolAutoencoder, EncodedFrames, FlowDirection, FlowField, GuidanceConfig, GuidanceMode,
    HarmonizerKind, IdentityAutoencoder, Init, NoiseSchedule, OcclusionMask, PixelRepository, ScoreModel,
    SmoothingKernel, Video,
};
use ndarray::{Array2, Array3, ArrayView3};
use numpy::{
    IntoPyArray, PyArray1, PyArray2, PyArray3, PyArray4, PyArrayDyn, PyArrayMethods, PyReadonlyArray2,
    PyReadonlyArray3, PyReadonlyArray4,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    flowmed,
    FlowmedError,
    PyValueError,
    "Invalid input to a flowmed operation."
);

fn err(e: flowmed::Error) -> PyErr {
    match e {
        flowmed::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => FlowmedError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for flowmed::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn parse_direction(s: &str) -> PyResult<FlowDirection> {
    s.parse()
        .map_err(|e: flowmed::Error| PyValueError::new_err(e.to_string()))
}

fn parse_mode(s: &str) -> PyResult<GuidanceMode> {
    s.parse()
        .map_err(|e: flowmed::Error| PyValueError::new_err(e.to_string()))
}

fn video(x: &PyReadonlyArray4<'_, f64>) -> Video {
    x.as_array().to_owned()
}

fn flow_field(flows: PyReadonlyArray4<'_, f64>, direction: &str) -> PyResult<FlowField> {
    FlowField::new(flows.as_array().to_owned(), parse_direction(direction)?).py()
}

fn mask_for(flow: &FlowField, occlusions: Option<PyReadonlyArray3<'_, bool>>) -> OcclusionMask {
    match occlusions {
        Some(m) => OcclusionMask::new(m.as_array().to_owned()),
        None => OcclusionMask::none_for(flow),
    }
}

fn kernel(kernel_length: usize, sigma: Option<f64>) -> PyResult<SmoothingKernel> {
    match sigma {
        Some(s) => flowmed::gaussian_kernel(kernel_length, s).py(),
        None => SmoothingKernel::flat(kernel_length).py(),
    }
}

fn repository(slots: PyReadonlyArray2<'_, f64>, codes: &Codes) -> PixelRepository {
    let slots: Array2<f64> = slots.as_array().to_owned();
    let mut counts = vec![0u64; slots.nrows()];
    for &c in codes.inner.codes() {
        if let Some(n) = counts.get_mut(c as usize) {
            *n += 1;
        }
    }
    PixelRepository::new(slots, counts)
}

/// Trajectory codes: one `uint64` per pixel, shape `(T, H, W)`.
#[pyclass(name = "Codes", module = "flowmed", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Codes {
    inner: EncodedFrames,
}

#[pymethods]
impl Codes {
    #[new]
    fn new(codes: PyReadonlyArray3<'_, u64>) -> Self {
        Self {
            inner: EncodedFrames::from_codes(codes.as_array().to_owned()),
        }
    }

    /// Every pixel on its own trajectory.
    #[staticmethod]
    fn distinct(frames: usize, height: usize, width: usize) -> Self {
        Self {
            inner: EncodedFrames::distinct(frames, height, width),
        }
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n()
    }

    #[getter]
    fn anchor(&self) -> usize {
        self.inner.anchor()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.dim()
    }

    fn array<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<u64>> {
        self.inner.codes().clone().into_pyarray(py)
    }

    /// Structural checks: range, unused codes and anchor layout.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = flowmed::validate_codes(&self.inner);
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("novel_per_frame", r.novel_per_frame.clone())?;
        d.set_item("range_violations", r.range_violations)?;
        d.set_item("unused_codes", r.unused_codes)?;
        d.set_item("anchor_violations", r.anchor_violations)?;
        d.set_item("passed", r.passed())?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.inner.n() as usize
    }

    fn __repr__(&self) -> String {
        let (t, h, w) = self.inner.dim();
        format!(
            "Codes(n={}, shape=({t}, {h}, {w}), anchor={})",
            self.inner.n(),
            self.inner.anchor()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (flows, occlusions=None, direction="backward"))]
fn flow_code(
    flows: PyReadonlyArray4<'_, f64>,
    occlusions: Option<PyReadonlyArray3<'_, bool>>,
    direction: &str,
) -> PyResult<Codes> {
    let flow = flow_field(flows, direction)?;
    let occ = mask_for(&flow, occlusions);
    Ok(Codes {
        inner: flowmed::flow_code(&flow, &occ).py()?,
    })
}

/// Coding with an extra backward flow spanning `gap + 1` frames.
#[pyfunction]
#[pyo3(signature = (flows, distant, gap, occlusions=None, distant_occlusions=None))]
fn flow_code_distant(
    flows: PyReadonlyArray4<'_, f64>,
    distant: PyReadonlyArray4<'_, f64>,
    gap: usize,
    occlusions: Option<PyReadonlyArray3<'_, bool>>,
    distant_occlusions: Option<PyReadonlyArray3<'_, bool>>,
) -> PyResult<Codes> {
    let adj = flow_field(flows, "backward")?;
    let dist = flow_field(distant, "backward")?;
    let occ_adj = mask_for(&adj, occlusions);
    let occ_dist = mask_for(&dist, distant_occlusions);
    Ok(Codes {
        inner: flowmed::flow_code_distant(&adj, &occ_adj, &dist, &occ_dist, gap).py()?,
    })
}

/// Returns the harmonized video and the `(n, C)` slot means.
#[pyfunction]
fn harmonize_global<'py>(
    py: Python<'py>,
    x: PyReadonlyArray4<'py, f64>,
    codes: &Codes,
) -> PyResult<(Bound<'py, PyArray4<f64>>, Bound<'py, PyArray2<f64>>)> {
    let x = video(&x);
    let (y, repo) = py.detach(|| flowmed::harmonize_global(&x, &codes.inner)).py()?;
    Ok((y.into_pyarray(py), repo.slots().clone().into_pyarray(py)))
}

/// Temporal smoothing along each trajectory; a flat kernel when `sigma` is
/// omitted.
#[pyfunction]
#[pyo3(signature = (x, codes, kernel_length, sigma=None))]
fn harmonize_local<'py>(
    py: Python<'py>,
    x: PyReadonlyArray4<'py, f64>,
    codes: &Codes,
    kernel_length: usize,
    sigma: Option<f64>,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let x = video(&x);
    let k = kernel(kernel_length, sigma)?;
    let y = py
        .detach(|| {
            let inv = flowmed::build_inverse_repository(&codes.inner)?;
            flowmed::harmonize_local(&x, &inv, &k)
        })
        .py()?;
    Ok(y.into_pyarray(py))
}

#[pyfunction]
fn gaussian_kernel<'py>(py: Python<'py>, length: usize, sigma: f64) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let k = flowmed::gaussian_kernel(length, sigma).py()?;
    Ok(k.taps().to_vec().into_pyarray(py))
}

#[pyfunction]
fn sigma_from_seed(seed: f64) -> f64 {
    flowmed::sigma_from_seed(seed)
}

#[pyfunction]
fn decode<'py>(
    py: Python<'py>,
    slots: PyReadonlyArray2<'py, f64>,
    codes: &Codes,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let repo = repository(slots, codes);
    Ok(flowmed::decode(&repo, &codes.inner).py()?.into_pyarray(py))
}

#[pyfunction]
fn consistency_loss(slots: PyReadonlyArray2<'_, f64>, codes: &Codes, x: PyReadonlyArray4<'_, f64>) -> PyResult<f64> {
    let repo = repository(slots, codes);
    flowmed::consistency_loss(&repo, &codes.inner, &video(&x)).py()
}

/// A harmonizer bound to one set of codes.
#[pyclass(name = "Harmonizer", module = "flowmed", frozen)]
struct PyHarmonizer {
    inner: flowmed::Harmonizer,
}

#[pymethods]
impl PyHarmonizer {
    #[new]
    #[pyo3(signature = (codes, mode="global", kernel_length=None, sigma=None))]
    fn new(codes: &Codes, mode: &str, kernel_length: Option<usize>, sigma: Option<f64>) -> PyResult<Self> {
        let kind = match (mode, kernel_length) {
            ("global", _) => HarmonizerKind::Global,
            ("local", Some(len)) => HarmonizerKind::Local(kernel(len, sigma)?),
            ("local", None) => return Err(PyValueError::new_err("local harmonizer needs kernel_length")),
            (other, _) => return Err(PyValueError::new_err(format!("unknown harmonizer {other:?}"))),
        };
        Ok(Self {
            inner: flowmed::Harmonizer::new(codes.inner.clone(), kind).py()?,
        })
    }

    fn apply<'py>(&self, py: Python<'py>, x: PyReadonlyArray4<'py, f64>) -> PyResult<Bound<'py, PyArray4<f64>>> {
        let x = video(&x);
        Ok(py.detach(|| self.inner.apply(&x)).py()?.into_pyarray(py))
    }

    #[getter]
    fn codes(&self) -> Codes {
        Codes {
            inner: self.inner.codes().clone(),
        }
    }
}

/// Cumulative noise levels `alpha_bar[t]`, with `alpha_bar[0] = 1`.
#[pyclass(name = "NoiseSchedule", module = "flowmed", frozen)]
struct PySchedule {
    inner: NoiseSchedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (
        steps=NoiseSchedule::DEFAULT_TRAIN_STEPS,
        beta_start=NoiseSchedule::DEFAULT_BETA_START,
        beta_end=NoiseSchedule::DEFAULT_BETA_END,
    ))]
    fn new(steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Self> {
        Ok(Self {
            inner: NoiseSchedule::linear(steps, beta_start, beta_end).py()?,
        })
    }

    #[staticmethod]
    fn from_alpha_bar(alpha_bar: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: NoiseSchedule::from_alpha_bar(alpha_bar).py()?,
        })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        self.inner.alpha_bar(t).py()
    }

    #[pyo3(signature = (steps, start_fraction=1.0))]
    fn timesteps(&self, steps: usize, start_fraction: f64) -> PyResult<Vec<usize>> {
        self.inner.timesteps(steps, start_fraction).py()
    }
}

#[pyfunction]
fn add_noise<'py>(
    py: Python<'py>,
    x0: PyReadonlyArray4<'py, f64>,
    t: usize,
    schedule: &PySchedule,
    eps: PyReadonlyArray4<'py, f64>,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(flowmed::add_noise(&video(&x0), t, &schedule.inner, &video(&eps))
        .py()?
        .into_pyarray(py))
}

#[pyfunction]
fn predict_x0<'py>(
    py: Python<'py>,
    x_t: PyReadonlyArray4<'py, f64>,
    eps: PyReadonlyArray4<'py, f64>,
    t: usize,
    schedule: &PySchedule,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(flowmed::predict_x0(&video(&x_t), &video(&eps), t, &schedule.inner)
        .py()?
        .into_pyarray(py))
}

#[pyfunction]
fn eps_from_x0<'py>(
    py: Python<'py>,
    x_t: PyReadonlyArray4<'py, f64>,
    x0: PyReadonlyArray4<'py, f64>,
    t: usize,
    schedule: &PySchedule,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(flowmed::eps_from_x0(&video(&x_t), &video(&x0), t, &schedule.inner)
        .py()?
        .into_pyarray(py))
}

#[pyfunction]
fn ddim_step<'py>(
    py: Python<'py>,
    x_t: PyReadonlyArray4<'py, f64>,
    eps: PyReadonlyArray4<'py, f64>,
    t: usize,
    t_prev: usize,
    schedule: &PySchedule,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(
        flowmed::ddim_step(&video(&x_t), &video(&eps), t, t_prev, &schedule.inner)
            .py()?
            .into_pyarray(py),
    )
}

#[pyfunction]
fn ddim_update<'py>(
    py: Python<'py>,
    x0: PyReadonlyArray4<'py, f64>,
    eps: PyReadonlyArray4<'py, f64>,
    t_prev: usize,
    schedule: &PySchedule,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(flowmed::ddim_update(&video(&x0), &video(&eps), t_prev, &schedule.inner)
        .py()?
        .into_pyarray(py))
}

/// `(1 - w) * pred + w * harmonized`.
#[pyfunction]
fn blend<'py>(
    py: Python<'py>,
    pred: PyReadonlyArray4<'py, f64>,
    harmonized: PyReadonlyArray4<'py, f64>,
    w: f64,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(flowmed::diffusion::blend(&video(&pred), &video(&harmonized), w)
        .py()?
        .into_pyarray(py))
}

fn autoencoder(pool: usize) -> PyResult<Box<dyn Autoencoder>> {
    Ok(match pool {
        0 => return Err(PyValueError::new_err("pool must be at least 1")),
        1 => Box::new(IdentityAutoencoder),
        f => Box::new(AvgPoolAutoencoder::new(f).py()?),
    })
}

/// Harmonized noise prediction through an average-pooling autoencoder
/// (`pool=1` is the identity).
#[pyfunction]
#[pyo3(signature = (x_t, eps, t, schedule, harmonizer, pool=1))]
fn harmonized_eps_latent<'py>(
    py: Python<'py>,
    x_t: PyReadonlyArray4<'py, f64>,
    eps: PyReadonlyArray4<'py, f64>,
    t: usize,
    schedule: &PySchedule,
    harmonizer: &PyHarmonizer,
    pool: usize,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let ae = autoencoder(pool)?;
    let (x_t, eps) = (video(&x_t), video(&eps));
    let out = py
        .detach(|| flowmed::harmonized_eps_latent(&x_t, &eps, t, &schedule.inner, ae.as_ref(), &harmonizer.inner))
        .py()?;
    Ok(out.into_pyarray(py))
}

/// Adapts a Python callable `f(frame, x_t, t, alpha_bar) -> eps` with
/// `x_t` and `eps` shaped `(C, H, W)`.
struct PyModel {
    f: Py<PyAny>,
}

impl ScoreModel for PyModel {
    fn predict_eps(
        &self,
        frame: usize,
        x_t: ArrayView3<'_, f64>,
        t: usize,
        alpha_bar: f64,
    ) -> flowmed::Result<Array3<f64>> {
        Python::attach(|py| {
            let x = x_t.to_owned().into_pyarray(py);
            let out = self.f.call1(py, (frame, x, t, alpha_bar))?;
            let arr = out.bind(py).cast::<PyArray3<f64>>().map_err(PyErr::from)?;
            Ok::<_, PyErr>(arr.readonly().as_array().to_owned())
        })
        .map_err(|e| flowmed::Error::InvalidParameter {
            name: "model",
            reason: e.to_string(),
        })
    }
}

/// Guided DDIM sampling. `model` is either a target video (the exact oracle),
/// or a callable `f(frame, x_t, t, alpha_bar) -> eps` whose latent channel
/// count is given by `channels` unless `source` is set.
#[pyfunction]
#[pyo3(signature = (
    model, harmonizer, w=0.8, mode="latent", steps=20, seed=0,
    start_fraction=1.0, source=None, pool=1, noise_scale=0.0, channels=None,
))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    harmonizer: &PyHarmonizer,
    w: f64,
    mode: &str,
    steps: usize,
    seed: u64,
    start_fraction: f64,
    source: Option<PyReadonlyArray4<'py, f64>>,
    pool: usize,
    noise_scale: f64,
    channels: Option<usize>,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let ae = autoencoder(pool)?;
    let mut channels = channels;
    let model: Box<dyn ScoreModel> = if let Ok(target) = model.cast::<PyArray4<f64>>() {
        let target = ae.encode(&target.readonly().as_array().to_owned()).py()?;
        channels.get_or_insert(target.dim().1);
        if noise_scale > 0.0 {
            Box::new(flowmed::NoisyOracleModel::new(target, noise_scale, seed).py()?)
        } else {
            Box::new(flowmed::OracleModel::new(target))
        }
    } else if model.is_callable() {
        Box::new(PyModel {
            f: model.clone().unbind(),
        })
    } else {
        return Err(PyTypeError::new_err(
            "model must be a float64 (T, C, H, W) array or a callable",
        ));
    };
    let cfg = GuidanceConfig {
        w,
        mode: parse_mode(mode)?,
        harmonizer: harmonizer.inner.kind().clone(),
        steps,
        start_fraction,
    };
    let init = match source {
        Some(v) => Init::Source { video: video(&v), seed },
        None => Init::Noise {
            channels: channels.ok_or_else(|| PyValueError::new_err("a callable model needs channels or source"))?,
            seed,
        },
    };
    let sched = NoiseSchedule::default();
    let out = py
        .detach(|| flowmed::generate(model.as_ref(), &harmonizer.inner, ae.as_ref(), &cfg, &sched, &init))
        .py()?;
    Ok(out.into_pyarray(py))
}

/// Endpoint-error statistics of `a` against `b`.
#[pyfunction]
#[pyo3(signature = (a, b, mask=None))]
fn endpoint_error<'py>(
    py: Python<'py>,
    a: PyReadonlyArray4<'py, f64>,
    b: PyReadonlyArray4<'py, f64>,
    mask: Option<PyReadonlyArray3<'py, bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let a = flow_field(a, "backward")?;
    let b = flow_field(b, "backward")?;
    let mask = mask.map(|m| OcclusionMask::new(m.as_array().to_owned()));
    let r = flowmed::endpoint_error(&a, &b, mask.as_ref()).py()?;
    let d = PyDict::new(py);
    d.set_item("mean_epe", r.mean_epe)?;
    d.set_item("frac_gt_1px", r.frac_gt_1)?;
    d.set_item("frac_gt_3px", r.frac_gt_3)?;
    d.set_item("frac_gt_5px", r.frac_gt_5)?;
    d.set_item("pixels", r.pixels)?;
    Ok(d)
}

/// Mean absolute difference between unoccluded pixels and their backward
/// flow correspondents.
#[pyfunction]
#[pyo3(signature = (x, flows, occlusions=None))]
fn warp_error<'py>(
    py: Python<'py>,
    x: PyReadonlyArray4<'py, f64>,
    flows: PyReadonlyArray4<'py, f64>,
    occlusions: Option<PyReadonlyArray3<'py, bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let flow = flow_field(flows, "backward")?;
    let occ = mask_for(&flow, occlusions);
    let r = flowmed::warp_error(&video(&x), &flow, &occ).py()?;
    let d = PyDict::new(py);
    d.set_item("mean", r.mean)?;
    d.set_item("compared", r.compared)?;
    d.set_item("out_of_bounds", r.out_of_bounds)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (x, radius=4, patch=5))]
fn block_matching_flow<'py>(
    py: Python<'py>,
    x: PyReadonlyArray4<'py, f64>,
    radius: usize,
    patch: usize,
) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let x = video(&x);
    let flow = py.detach(|| flowmed::block_matching_flow(&x, radius, patch)).py()?;
    Ok(flow.into_data().into_pyarray(py))
}

#[pyfunction]
#[pyo3(signature = (x, column, width=flowmed::DEFAULT_SCAN_WIDTH, shift=1))]
fn horizontal_scan<'py>(
    py: Python<'py>,
    x: PyReadonlyArray4<'py, f64>,
    column: usize,
    width: usize,
    shift: usize,
) -> PyResult<Bound<'py, PyArray3<f64>>> {
    Ok(flowmed::horizontal_scan(&video(&x), column, width, shift)
        .py()?
        .into_pyarray(py))
}

/// Reads a tensor container, keeping its dtype.
#[pyfunction]
fn read_tensor<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    Ok(match io::read_tensor(&path).py()? {
        Tensor::F32(a) => a.into_pyarray(py).into_any(),
        Tensor::F64(a) => a.into_pyarray(py).into_any(),
        Tensor::U64(a) => a.into_pyarray(py).into_any(),
        Tensor::U8(a) => a.into_pyarray(py).into_any(),
    })
}

/// Writes a float32, float64, uint64 or uint8 array as a tensor container.
#[pyfunction]
fn write_tensor(path: PathBuf, array: &Bound<'_, PyAny>) -> PyResult<()> {
    let tensor = if let Ok(a) = array.cast::<PyArrayDyn<f32>>() {
        Tensor::F32(a.readonly().as_array().to_owned())
    } else if let Ok(a) = array.cast::<PyArrayDyn<f64>>() {
        Tensor::F64(a.readonly().as_array().to_owned())
    } else if let Ok(a) = array.cast::<PyArrayDyn<u64>>() {
        Tensor::U64(a.readonly().as_array().to_owned())
    } else if let Ok(a) = array.cast::<PyArrayDyn<u8>>() {
        Tensor::U8(a.readonly().as_array().to_owned())
    } else {
        return Err(PyTypeError::new_err(
            "expected a float32, float64, uint64 or uint8 numpy array",
        ));
    };
    io::write_tensor(&path, &tensor).py()
}

#[pyfunction]
fn read_codes(path: PathBuf) -> PyResult<Codes> {
    Ok(Codes {
        inner: io::read_codes(&path).py()?,
    })
}

#[pyfunction]
fn write_codes(path: PathBuf, codes: &Codes) -> PyResult<()> {
    io::write_codes(&path, &codes.inner).py()
}

/// One `.flo` file as an `(H, W, 2)` array of `(dy, dx)`.
#[pyfunction]
fn read_flo<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyArray3<f64>>> {
    Ok(io::read_flo(&path).py()?.into_pyarray(py))
}

#[pyfunction]
fn write_flo(path: PathBuf, flow: PyReadonlyArray3<'_, f64>) -> PyResult<()> {
    io::write_flo(&path, flow.as_array()).py()
}

/// All `.flo` files of a directory in name order, as `(T - 1, H, W, 2)`
/// backward flows.
#[pyfunction]
#[pyo3(signature = (dir, direction="backward"))]
fn read_flow_dir<'py>(py: Python<'py>, dir: PathBuf, direction: &str) -> PyResult<Bound<'py, PyArray4<f64>>> {
    let flow = io::read_flow_dir(&dir, parse_direction(direction)?).py()?;
    Ok(flow.into_data().into_pyarray(py))
}

#[pyfunction]
fn read_frames<'py>(py: Python<'py>, dir: PathBuf) -> PyResult<Bound<'py, PyArray4<f64>>> {
    Ok(io::read_frames(&dir).py()?.into_pyarray(py))
}

#[pyfunction]
fn write_frames(dir: PathBuf, x: PyReadonlyArray4<'_, f64>) -> PyResult<()> {
    io::write_frames(&dir, &video(&x)).py()
}

#[pyfunction]
fn read_masks<'py>(py: Python<'py>, dir: PathBuf) -> PyResult<Bound<'py, PyArray3<bool>>> {
    Ok(io::read_masks(&dir).py()?.data().clone().into_pyarray(py))
}

#[pymodule]
#[pyo3(name = "flowmed")]
fn flowmed_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlowmedError", m.py().get_type::<FlowmedError>())?;
    m.add("DEFAULT_SCAN_WIDTH", flowmed::DEFAULT_SCAN_WIDTH)?;
    m.add_class::<Codes>()?;
    m.add_class::<PyHarmonizer>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(flow_code, m)?)?;
    m.add_function(wrap_pyfunction!(flow_code_distant, m)?)?;
    m.add_function(wrap_pyfunction!(harmonize_global, m)?)?;
    m.add_function(wrap_pyfunction!(harmonize_local, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_from_seed, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(predict_x0, m)?)?;
    m.add_function(wrap_pyfunction!(eps_from_x0, m)?)?;
    m.add_function(wrap_pyfunction!(ddim_step, m)?)?;
    m.add_function(wrap_pyfunction!(ddim_update, m)?)?;
    m.add_function(wrap_pyfunction!(blend, m)?)?;
    m.add_function(wrap_pyfunction!(harmonized_eps_latent, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(endpoint_error, m)?)?;
    m.add_function(wrap_pyfunction!(warp_error, m)?)?;
    m.add_function(wrap_pyfunction!(block_matching_flow, m)?)?;
    m.add_function(wrap_pyfunction!(horizontal_scan, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_codes, m)?)?;
    m.add_function(wrap_pyfunction!(write_codes, m)?)?;
    m.add_function(wrap_pyfunction!(read_flo, m)?)?;
    m.add_function(wrap_pyfunction!(write_flo, m)?)?;
    m.add_function(wrap_pyfunction!(read_flow_dir, m)?)?;
    m.add_function(wrap_pyfunction!(read_frames, m)?)?;
    m.add_function(wrap_pyfunction!(write_frames, m)?)?;
    m.add_function(wrap_pyfunction!(read_masks, m)?)?;
    Ok(())
}
