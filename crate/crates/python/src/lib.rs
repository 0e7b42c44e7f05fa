//! Python bindings. Volumes cross the boundary as 3-D numpy arrays indexed
//! `[x, y, z]` (Fortran order on output); spacing is a `(sx, sy, sz)` tuple
//! in millimetres.

use numpy::ndarray::{Array3, ShapeBuilder};
use numpy::{Element, IntoPyArray, PyArray3, PyReadonlyArray3};
use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use biatrium_core::geometry;
use biatrium_core::io as bio;
use biatrium_core::loss::{self, AsymLossParams};
use biatrium_core::mclahe::MclaheParams;
use biatrium_core::metrics::{self, PointMode};
use biatrium_core::phantom::{self, PhantomSpec};
use biatrium_core::pipeline::{self, PipelineConfig};
use biatrium_core::{ClassMap, Image, LabelMap, Volume};

pyo3::create_exception!(biatrium, BiatriumError, PyValueError);

fn err(e: biatrium_core::Error) -> PyErr {
    BiatriumError::new_err(e.to_string())
}

type Spacing = (f64, f64, f64);

fn to_image<T: Element + Copy>(arr: &PyReadonlyArray3<'_, T>, spacing: Spacing) -> PyResult<Image<T>> {
    let a = arr.as_array();
    let (nx, ny, nz) = a.dim();
    Image::from_fn([nx, ny, nz], [spacing.0, spacing.1, spacing.2], |x, y, z| a[[x, y, z]]).map_err(err)
}

fn to_numpy<'py, T: Element + Copy>(py: Python<'py>, img: &Image<T>) -> Bound<'py, PyArray3<T>> {
    let [nx, ny, nz] = img.shape();
    Array3::from_shape_vec((nx, ny, nz).f(), img.data().to_vec())
        .expect("shape matches data")
        .into_pyarray(py)
}

fn spacing_tuple(s: [f64; 3]) -> Spacing {
    (s[0], s[1], s[2])
}

/// Float32 or uint8 input for the geometry helpers.
enum AnyImage {
    F32(Volume),
    U8(LabelMap),
}

fn any_image(obj: &Bound<'_, PyAny>, spacing: Spacing) -> PyResult<AnyImage> {
    if let Ok(a) = obj.extract::<PyReadonlyArray3<'_, f32>>() {
        return Ok(AnyImage::F32(to_image(&a, spacing)?));
    }
    if let Ok(a) = obj.extract::<PyReadonlyArray3<'_, u8>>() {
        return Ok(AnyImage::U8(to_image(&a, spacing)?));
    }
    Err(PyTypeError::new_err("expected a 3-D float32 or uint8 numpy array"))
}

/// Child grid `c` maps to parent voxel `c + offset`.
#[pyclass(module = "biatrium", name = "Placement", from_py_object)]
#[derive(Clone)]
struct PyPlacement(geometry::Placement);

#[pymethods]
impl PyPlacement {
    #[new]
    fn new(parent_shape: [usize; 3], offset: [i64; 3], window_shape: [usize; 3]) -> PyResult<Self> {
        let p = geometry::Placement {
            parent_shape,
            offset,
            window_shape,
        };
        p.validate().map_err(err)?;
        Ok(PyPlacement(p))
    }

    #[getter]
    fn parent_shape(&self) -> [usize; 3] {
        self.0.parent_shape
    }

    #[getter]
    fn offset(&self) -> [i64; 3] {
        self.0.offset
    }

    #[getter]
    fn window_shape(&self) -> [usize; 3] {
        self.0.window_shape
    }

    fn to_parent(&self, index: [usize; 3]) -> Option<[usize; 3]> {
        self.0.to_parent(index)
    }

    fn to_child(&self, index: [usize; 3]) -> Option<[usize; 3]> {
        self.0.to_child(index)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        bio::parse_placement(text).map(PyPlacement).map_err(err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Placement(parent_shape={:?}, offset={:?}, window_shape={:?})",
            self.0.parent_shape, self.0.offset, self.0.window_shape
        )
    }
}

/// Half-open voxel box `[lo, hi)`.
#[pyclass(module = "biatrium", name = "BBox", from_py_object)]
#[derive(Clone)]
struct PyBBox(geometry::BBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        PyBBox(geometry::BBox { lo, hi })
    }

    #[getter]
    fn lo(&self) -> [usize; 3] {
        self.0.lo
    }

    #[getter]
    fn hi(&self) -> [usize; 3] {
        self.0.hi
    }

    fn size(&self) -> [usize; 3] {
        self.0.size()
    }

    fn center(&self) -> [i64; 3] {
        self.0.center()
    }

    fn contains(&self, index: [usize; 3]) -> bool {
        self.0.contains(index)
    }

    fn scale(&self, factors: [usize; 3]) -> Self {
        PyBBox(self.0.scale(factors))
    }

    fn expand(&self, margin: usize, shape: [usize; 3]) -> Self {
        PyBBox(self.0.expand(margin, shape))
    }

    fn __repr__(&self) -> String {
        format!("BBox(lo={:?}, hi={:?})", self.0.lo, self.0.hi)
    }
}

/// `(array, spacing)` for a float NIfTI file.
#[pyfunction]
fn read_volume(py: Python<'_>, path: &str) -> PyResult<(Py<PyArray3<f32>>, Spacing)> {
    let v = py.detach(|| bio::read_volume(path)).map_err(err)?;
    Ok((to_numpy(py, &v).unbind(), spacing_tuple(v.spacing())))
}

/// `(array, spacing)` for a label NIfTI file.
#[pyfunction]
fn read_label_map(py: Python<'_>, path: &str) -> PyResult<(Py<PyArray3<u8>>, Spacing)> {
    let m = py.detach(|| bio::read_label_map(path)).map_err(err)?;
    Ok((to_numpy(py, &m).unbind(), spacing_tuple(m.spacing())))
}

/// Writes float32; gzip when `compress` or, if unset, when the name ends in `.gz`.
#[pyfunction]
#[pyo3(signature = (path, array, spacing=(1.0, 1.0, 1.0), compress=None))]
fn write_volume(py: Python<'_>, path: &str, array: PyReadonlyArray3<'_, f32>, spacing: Spacing, compress: Option<bool>) -> PyResult<()> {
    let v = to_image(&array, spacing)?;
    let gz = compress.unwrap_or_else(|| bio::wants_gzip(path));
    py.detach(|| bio::write_volume(&v, path, gz)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (path, array, spacing=(1.0, 1.0, 1.0), compress=None))]
fn write_label_map(py: Python<'_>, path: &str, array: PyReadonlyArray3<'_, u8>, spacing: Spacing, compress: Option<bool>) -> PyResult<()> {
    let m = to_image(&array, spacing)?;
    let gz = compress.unwrap_or_else(|| bio::wants_gzip(path));
    py.detach(|| bio::write_label_map(&m, path, gz)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (array, kernel_size=None, n_bins=128, clip_limit=0.01))]
fn mclahe<'py>(
    py: Python<'py>,
    array: PyReadonlyArray3<'py, f32>,
    kernel_size: Option<[usize; 3]>,
    n_bins: usize,
    clip_limit: f64,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let v = to_image(&array, (1.0, 1.0, 1.0))?;
    let p = MclaheParams {
        kernel_size,
        n_bins,
        clip_limit,
    };
    let out = py.detach(|| biatrium_core::mclahe::mclahe(&v, &p)).map_err(err)?;
    Ok(to_numpy(py, &out))
}

/// Pads/crops about the centre to `target`; returns `(array, Placement)`.
#[pyfunction]
fn standardize<'py>(py: Python<'py>, array: &Bound<'py, PyAny>, target: [usize; 3]) -> PyResult<(Bound<'py, PyAny>, PyPlacement)> {
    Ok(match any_image(array, (1.0, 1.0, 1.0))? {
        AnyImage::F32(v) => {
            let (o, p) = geometry::standardize(&v, target, 0.0).map_err(err)?;
            (to_numpy(py, &o).into_any(), PyPlacement(p))
        }
        AnyImage::U8(m) => {
            let (o, p) = geometry::standardize(&m, target, 0).map_err(err)?;
            (to_numpy(py, &o).into_any(), PyPlacement(p))
        }
    })
}

/// Cuts a `window` centred on `center`; returns `(array, Placement)`.
#[pyfunction]
fn crop_window<'py>(
    py: Python<'py>,
    array: &Bound<'py, PyAny>,
    center: [i64; 3],
    window: [usize; 3],
) -> PyResult<(Bound<'py, PyAny>, PyPlacement)> {
    Ok(match any_image(array, (1.0, 1.0, 1.0))? {
        AnyImage::F32(v) => {
            let (o, p) = geometry::crop_window(&v, center, window, 0.0).map_err(err)?;
            (to_numpy(py, &o).into_any(), PyPlacement(p))
        }
        AnyImage::U8(m) => {
            let (o, p) = geometry::crop_window(&m, center, window, 0).map_err(err)?;
            (to_numpy(py, &o).into_any(), PyPlacement(p))
        }
    })
}

#[pyfunction]
fn stitch<'py>(py: Python<'py>, mask: PyReadonlyArray3<'py, u8>, placement: &PyPlacement) -> PyResult<Bound<'py, PyArray3<u8>>> {
    let m = to_image(&mask, (1.0, 1.0, 1.0))?;
    Ok(to_numpy(py, &geometry::stitch(&m, &placement.0).map_err(err)?))
}

/// Block mean of a float volume, or any-nonzero pooling of a uint8 mask.
#[pyfunction]
fn downsample<'py>(py: Python<'py>, array: &Bound<'py, PyAny>, factors: [usize; 3]) -> PyResult<Bound<'py, PyAny>> {
    Ok(match any_image(array, (1.0, 1.0, 1.0))? {
        AnyImage::F32(v) => to_numpy(py, &geometry::downsample_mean(&v, factors).map_err(err)?).into_any(),
        AnyImage::U8(m) => to_numpy(py, &geometry::downsample_any(&m, factors, |v| v != 0).map_err(err)?).into_any(),
    })
}

/// Tight box of voxels whose code is in `classes` (default any nonzero).
#[pyfunction]
#[pyo3(signature = (mask, classes=None))]
fn bbox_from_mask(mask: PyReadonlyArray3<'_, u8>, classes: Option<Vec<u8>>) -> PyResult<PyBBox> {
    let m = to_image(&mask, (1.0, 1.0, 1.0))?;
    let classes = classes.unwrap_or_else(|| (1..=255).collect());
    geometry::bbox_from_mask(&m, &classes).map(PyBBox).map_err(err)
}

fn class_map(map: Option<&Bound<'_, PyDict>>) -> PyResult<ClassMap> {
    match map {
        None => Ok(ClassMap::default()),
        Some(d) => {
            let entries = d
                .iter()
                .map(|(k, v)| Ok((k.extract::<String>()?, v.extract::<u8>()?)))
                .collect::<PyResult<Vec<_>>>()?;
            ClassMap::new(entries).map_err(err)
        }
    }
}

/// One dict per class: `class`, `dice`, `hd95_mm`, `hd_mm`, `flag`.
#[pyfunction]
#[pyo3(signature = (pred, gt, spacing=(1.0, 1.0, 1.0), class_map=None, region=false))]
fn evaluate<'py>(
    py: Python<'py>,
    pred: PyReadonlyArray3<'py, u8>,
    gt: PyReadonlyArray3<'py, u8>,
    spacing: Spacing,
    class_map: Option<&Bound<'py, PyDict>>,
    region: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let (p, g) = (to_image(&pred, spacing)?, to_image(&gt, spacing)?);
    let classes = self::class_map(class_map)?;
    let mode = if region { PointMode::Region } else { PointMode::Surface };
    let report = py
        .detach(|| metrics::evaluate_case("case", &p, &g, &classes, mode))
        .map_err(err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("class", &r.class_name)?;
            d.set_item("dice", r.dice)?;
            d.set_item("hd95_mm", r.hd95_mm)?;
            d.set_item("hd_mm", r.hd_mm)?;
            d.set_item("flag", r.flag.map(|f| f.as_str()))?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn dice(tp: u64, fp: u64, fn_: u64) -> f64 {
    metrics::dice(metrics::ConfusionCounts { tp, fp, fn_ }).value
}

/// HD95 between two point lists in millimetres.
#[pyfunction]
fn hd95(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> f64 {
    metrics::hd95(&a, &b).mm
}

#[pyfunction]
fn hausdorff(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> f64 {
    metrics::hausdorff(&a, &b).mm
}

fn loss_params(gamma_pos: f64, gamma_neg: f64, margin: f64) -> PyResult<AsymLossParams> {
    AsymLossParams::new(gamma_pos, gamma_neg, margin).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, p, gamma_pos=1.0, gamma_neg=4.0, margin=0.05))]
fn asym_loss(y: u8, p: f64, gamma_pos: f64, gamma_neg: f64, margin: f64) -> PyResult<f64> {
    loss::asym_loss(y, p, &loss_params(gamma_pos, gamma_neg, margin)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, p, gamma_pos=1.0, gamma_neg=4.0, margin=0.05))]
fn asym_loss_grad(y: u8, p: f64, gamma_pos: f64, gamma_neg: f64, margin: f64) -> PyResult<f64> {
    loss::asym_loss_grad(y, p, &loss_params(gamma_pos, gamma_neg, margin)?).map_err(err)
}

/// Mean one-vs-rest loss; `probs[c]` scores `gt == classes[c]`.
#[pyfunction]
#[pyo3(signature = (probs, gt, classes=None, gamma_pos=1.0, gamma_neg=4.0, margin=0.05))]
fn volume_loss(
    probs: Vec<PyReadonlyArray3<'_, f32>>,
    gt: PyReadonlyArray3<'_, u8>,
    classes: Option<Vec<u8>>,
    gamma_pos: f64,
    gamma_neg: f64,
    margin: f64,
) -> PyResult<f64> {
    let vols = probs
        .iter()
        .map(|p| to_image(p, (1.0, 1.0, 1.0)))
        .collect::<PyResult<Vec<_>>>()?;
    let gt = to_image(&gt, (1.0, 1.0, 1.0))?;
    let classes = classes.unwrap_or_else(|| loss::default_classes(vols.len()));
    loss::volume_loss(&vols, &gt, &classes, &loss_params(gamma_pos, gamma_neg, margin)?).map_err(err)
}

/// `(passed, worst_relative_error)`.
#[pyfunction]
#[pyo3(signature = (samples=1000, seed=0))]
fn grad_check(samples: usize, seed: u64) -> PyResult<(bool, f64)> {
    let r = loss::grad_check(samples, seed).map_err(err)?;
    Ok((r.passed(), r.worst().map_or(0.0, |w| w.rel_error)))
}

/// `(image, ground_truth, spacing)`. `spec_json` overrides the default
/// full-size geometry.
#[pyfunction]
#[pyo3(signature = (seed=0, noise=0.0, spec_json=None))]
#[allow(clippy::type_complexity)]
fn make_phantom(
    py: Python<'_>,
    seed: u64,
    noise: f64,
    spec_json: Option<&str>,
) -> PyResult<(Py<PyArray3<f32>>, Py<PyArray3<u8>>, Spacing)> {
    let mut spec = match spec_json {
        Some(t) => serde_json::from_str::<PhantomSpec>(t).map_err(|e| BiatriumError::new_err(e.to_string()))?,
        None => PhantomSpec::challenge_like(seed),
    };
    spec.seed = seed;
    spec.noise = noise;
    let (img, gt) = py.detach(|| phantom::generate(&spec)).map_err(err)?;
    Ok((to_numpy(py, &img).unbind(), to_numpy(py, &gt).unbind(), spacing_tuple(img.spacing())))
}

/// Runs a pipeline config file; returns one dict per case.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config_path: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = PipelineConfig::load(config_path).map_err(err)?;
    let res = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    res.cases
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("case_id", &c.case_id)?;
            d.set_item("status", c.status.as_str())?;
            d.set_item("mask_path", c.mask_path.as_ref().map(|p| p.to_string_lossy().into_owned()))?;
            d.set_item("flags", &c.flags)?;
            d.set_item("error", &c.error)?;
            d.set_item("standardize", c.standardize.map(PyPlacement))?;
            d.set_item("crop", c.crop.map(PyPlacement))?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn biatrium(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BiatriumError", m.py().get_type::<BiatriumError>())?;
    m.add_class::<PyPlacement>()?;
    m.add_class::<PyBBox>()?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(read_label_map, m)?)?;
    m.add_function(wrap_pyfunction!(write_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_label_map, m)?)?;
    m.add_function(wrap_pyfunction!(mclahe, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(crop_window, m)?)?;
    m.add_function(wrap_pyfunction!(stitch, m)?)?;
    m.add_function(wrap_pyfunction!(downsample, m)?)?;
    m.add_function(wrap_pyfunction!(bbox_from_mask, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(hd95, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(asym_loss, m)?)?;
    m.add_function(wrap_pyfunction!(asym_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(volume_loss, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
