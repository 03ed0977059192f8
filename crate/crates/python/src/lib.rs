//! Python bindings: skeleton models, the projection layer, synthetic samples, the
//! fitting baseline, trained interpreters and the evaluation metrics.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use interp3d::camera::{rotation_from_angles, Keypoints2D};
use interp3d::eval::{self, RetrievalMode};
use interp3d::fit::{fit_from_heatmaps, fit_keypoints, FitConfig, FitResult};
use interp3d::net::WeightsFile;
use interp3d::synth::{argmax_keypoints, corrupt_salt_pepper, generate_dataset};
use interp3d::wireframe::write_obj;
use interp3d::{rng, skeleton};

fn err(e: interp3d::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows3(m: &nalgebra::Matrix3xX<f64>) -> Vec<[f64; 3]> {
    m.column_iter().map(|c| [c[0], c[1], c[2]]).collect()
}

fn rows2(k: &Keypoints2D) -> Vec<[f64; 2]> {
    k.coords.column_iter().map(|c| [c[0], c[1]]).collect()
}

fn keypoints(points: &[[f64; 2]]) -> Keypoints2D {
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    Keypoints2D::new(nalgebra::Matrix2xX::from_column_slice(&flat))
}

/// A category skeleton with its base shapes.
#[pyclass(name = "BaseShapes", frozen)]
struct PyBaseShapes {
    inner: interp3d::BaseShapeSet,
}

#[pymethods]
impl PyBaseShapes {
    /// One of the shipped models: "chair" or "car".
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        Ok(Self { inner: interp3d::BaseShapeSet::bundled(name).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: interp3d::load_base_shapes(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: interp3d::BaseShapeSet::from_json_str(text).map_err(err)? })
    }

    #[getter]
    fn category(&self) -> String {
        self.inner.spec.category.clone()
    }

    #[getter]
    fn keypoint_names(&self) -> Vec<String> {
        self.inner.spec.keypoint_names.clone()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.spec.edges.clone()
    }

    #[getter]
    fn num_bases(&self) -> usize {
        self.inner.num_bases()
    }

    #[getter]
    fn num_keypoints(&self) -> usize {
        self.inner.num_keypoints()
    }

    /// Composed 3D keypoints (N rows of x, y, z) for the free structural weights.
    fn compose(&self, alpha_free: Vec<f64>) -> PyResult<Vec<[f64; 3]>> {
        let y = skeleton::compose_skeleton(&interp3d::StructuralParams::from_free(&alpha_free), &self.inner)
            .map_err(err)?;
        Ok(rows3(&y.coords))
    }

    /// Wavefront OBJ text for the composed skeleton.
    fn to_obj(&self, alpha_free: Vec<f64>) -> PyResult<String> {
        let y = skeleton::compose_skeleton(&interp3d::StructuralParams::from_free(&alpha_free), &self.inner)
            .map_err(err)?;
        let mut buf = Vec::new();
        write_obj(&mut buf, &y, &self.inner.spec).map_err(err)?;
        Ok(String::from_utf8(buf).expect("OBJ output is ASCII"))
    }

    fn __repr__(&self) -> String {
        format!(
            "BaseShapes(category={:?}, keypoints={}, bases={})",
            self.inner.spec.category,
            self.inner.num_keypoints(),
            self.inner.num_bases()
        )
    }
}

/// Structural weights plus camera parameters.
#[pyclass(name = "ParamVector", frozen)]
struct PyParamVector {
    inner: interp3d::ParamVector,
}

#[pymethods]
impl PyParamVector {
    #[new]
    #[pyo3(signature = (alpha_free, azimuth=0.0, elevation=0.0, tilt=0.0, t=[0.0, 0.0, 0.0], inv_f=0.0))]
    fn new(alpha_free: Vec<f64>, azimuth: f64, elevation: f64, tilt: f64, t: [f64; 3], inv_f: f64) -> Self {
        Self {
            inner: interp3d::ParamVector { alpha_free, azimuth, elevation, tilt, t, inv_f },
        }
    }

    /// From the flat layout `alpha_free..., azimuth, elevation, tilt, t_x, t_y, t_z, inv_f`.
    #[staticmethod]
    fn from_list(values: Vec<f64>, num_bases: usize) -> PyResult<Self> {
        Ok(Self { inner: interp3d::ParamVector::from_slice(&values, num_bases).map_err(err)? })
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.to_vec()
    }

    #[getter]
    fn alpha_free(&self) -> Vec<f64> {
        self.inner.alpha_free.clone()
    }

    #[getter]
    fn azimuth(&self) -> f64 {
        self.inner.azimuth
    }

    #[getter]
    fn elevation(&self) -> f64 {
        self.inner.elevation
    }

    #[getter]
    fn tilt(&self) -> f64 {
        self.inner.tilt
    }

    #[getter]
    fn t(&self) -> [f64; 3] {
        self.inner.t
    }

    #[getter]
    fn inv_f(&self) -> f64 {
        self.inner.inv_f
    }

    fn __repr__(&self) -> String {
        format!("ParamVector({:?})", self.inner.to_vec())
    }
}

/// One synthetic case: heatmaps, true parameters, 3D skeleton and 2D keypoints.
#[pyclass(name = "Sample", frozen)]
struct PySample {
    inner: interp3d::SynthSample,
}

#[pymethods]
impl PySample {
    #[getter]
    fn params(&self) -> PyParamVector {
        PyParamVector { inner: self.inner.s_true.clone() }
    }

    #[getter]
    fn keypoints_3d(&self) -> Vec<[f64; 3]> {
        rows3(&self.inner.y_true.coords)
    }

    #[getter]
    fn keypoints_2d(&self) -> Vec<[f64; 2]> {
        rows2(&self.inner.x_true)
    }

    /// `(channels, height, width)`
    #[getter]
    fn heatmap_shape(&self) -> (usize, usize, usize) {
        let h = &self.inner.heatmaps;
        (h.channels, h.grid.height, h.grid.width)
    }

    /// Flat row-major heatmap values, channel by channel.
    fn heatmaps(&self) -> Vec<f32> {
        self.inner.heatmaps.data.clone()
    }

    /// Argmax-decoded keypoints, optionally after salt-and-pepper corruption.
    #[pyo3(signature = (noise=0.0, seed=0))]
    fn decoded_keypoints(&self, noise: f64, seed: u64) -> Vec<[f64; 2]> {
        let h = corrupt_salt_pepper(&self.inner.heatmaps, noise, &mut rng::stream_rng(seed, rng::STREAM_NOISE, 0));
        rows2(&argmax_keypoints(&h))
    }
}

/// Result of the optimization baseline.
#[pyclass(name = "FitResult", frozen)]
struct PyFitResult {
    #[pyo3(get)]
    final_cost: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    params: interp3d::ParamVector,
}

impl From<FitResult> for PyFitResult {
    fn from(r: FitResult) -> Self {
        Self { final_cost: r.final_cost, converged: r.converged, iterations: r.iterations, params: r.s_hat }
    }
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn params(&self) -> PyParamVector {
        PyParamVector { inner: self.params.clone() }
    }
}

/// A trained interpreter loaded from a weights file.
#[pyclass(name = "Interpreter", frozen)]
struct PyInterpreter {
    inner: interp3d::net::Interpreter,
}

#[pymethods]
impl PyInterpreter {
    #[staticmethod]
    fn load(path: &str, bases: PyRef<'_, PyBaseShapes>) -> PyResult<Self> {
        let w = WeightsFile::load(path).map_err(err)?;
        Ok(Self { inner: w.into_interpreter(&bases.inner).map_err(err)? })
    }

    fn predict(&self, sample: PyRef<'_, PySample>) -> PyResult<PyParamVector> {
        Ok(PyParamVector { inner: self.inner.predict(&sample.inner.heatmaps).map_err(err)? })
    }
}

/// 2D projection of the skeleton described by `params` (N rows of x, y).
#[pyfunction]
fn project(params: PyRef<'_, PyParamVector>, bases: PyRef<'_, PyBaseShapes>) -> PyResult<Vec<[f64; 2]>> {
    Ok(rows2(&interp3d::project_skeleton(&params.inner, &bases.inner).map_err(err)?))
}

/// Jacobian of the flattened projection `(x_0, y_0, x_1, …)` w.r.t. the flat parameters.
#[pyfunction]
fn projection_jacobian(params: PyRef<'_, PyParamVector>, bases: PyRef<'_, PyBaseShapes>) -> PyResult<Vec<Vec<f64>>> {
    let j = interp3d::projection_jacobian(&params.inner, &bases.inner).map_err(err)?;
    Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn rotation_matrix(azimuth: f64, elevation: f64, tilt: f64) -> [[f64; 3]; 3] {
    let r = rotation_from_angles(azimuth, elevation, tilt);
    [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]])
}

/// Deterministic synthetic samples with default sampling ranges.
#[pyfunction]
#[pyo3(signature = (bases, count, seed=0, noise=0.0))]
fn generate(bases: PyRef<'_, PyBaseShapes>, count: usize, seed: u64, noise: f64) -> PyResult<Vec<PySample>> {
    let cfg = interp3d::SamplerConfig { seed, noise, ..Default::default() };
    let samples = generate_dataset(&cfg, &bases.inner, count).map_err(err)?;
    Ok(samples.into_iter().map(|inner| PySample { inner }).collect())
}

/// Fits a parameter vector to 2D keypoints (N rows of x, y).
#[pyfunction]
#[pyo3(signature = (bases, keypoints_2d, restarts=8, seed=0))]
fn fit(bases: PyRef<'_, PyBaseShapes>, keypoints_2d: Vec<[f64; 2]>, restarts: usize, seed: u64) -> PyResult<PyFitResult> {
    let cfg = FitConfig { restarts, seed, ..FitConfig::default() };
    Ok(fit_keypoints(&keypoints(&keypoints_2d), &bases.inner, &cfg).map_err(err)?.into())
}

/// Argmax decoding of a sample's heatmaps followed by [`fit`].
#[pyfunction]
#[pyo3(signature = (bases, sample, restarts=8, seed=0))]
fn fit_sample(bases: PyRef<'_, PyBaseShapes>, sample: PyRef<'_, PySample>, restarts: usize, seed: u64) -> PyResult<PyFitResult> {
    let cfg = FitConfig { restarts, seed, ..FitConfig::default() };
    Ok(fit_from_heatmaps(&sample.inner.heatmaps, &bases.inner, &cfg).map_err(err)?.into())
}

/// Normalized 3D RMSE between two keypoint sets (N rows of x, y, z).
#[pyfunction]
fn rmse_3d(y_hat: Vec<[f64; 3]>, y_true: Vec<[f64; 3]>) -> PyResult<f64> {
    let a = interp3d::Shape3D::from_points(&y_hat).map_err(err)?;
    let b = interp3d::Shape3D::from_points(&y_true).map_err(err)?;
    eval::rmse_3d(&a, &b).map_err(err)
}

/// Scores a prediction against a sample: `(rmse_3d, azimuth_deg, reproj_2d)`.
#[pyfunction]
fn score(params: PyRef<'_, PyParamVector>, sample: PyRef<'_, PySample>, bases: PyRef<'_, PyBaseShapes>) -> PyResult<(f64, f64, f64)> {
    let e = eval::score(&params.inner, &sample.inner, &bases.inner).map_err(err)?;
    Ok((e.rmse_3d, e.azimuth_deg, e.reproj_2d))
}

/// Wrapped azimuth difference in degrees for two angles in radians.
#[pyfunction]
fn azimuth_error(a: f64, b: f64) -> f64 {
    eval::angle_difference_deg(a, b)
}

/// `(recall per threshold, average recall)`
#[pyfunction]
fn recall_curve(errors: Vec<f64>, thresholds: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let c = eval::recall_curve(&errors, &thresholds).map_err(err)?;
    Ok((c.recall, c.average_recall))
}

#[pyfunction]
fn pck(pred: Vec<[f64; 2]>, gt: Vec<[f64; 2]>, normalizer: f64, t: f64) -> PyResult<f64> {
    eval::pck(&keypoints(&pred), &keypoints(&gt), normalizer, t).map_err(err)
}

#[pyfunction]
fn pcp(pred: Vec<[f64; 2]>, gt: Vec<[f64; 2]>, stds: Vec<f64>) -> PyResult<f64> {
    eval::pcp(&keypoints(&pred), &keypoints(&gt), &stds).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, bound=eval::AE_BOUND))]
fn average_error(pred: Vec<[f64; 2]>, gt: Vec<[f64; 2]>, bound: f64) -> PyResult<f64> {
    eval::average_error(&keypoints(&pred), &keypoints(&gt), bound).map_err(err)
}

/// Ranked `(index, distance)` pairs; `mode` is "structure" or "viewpoint".
#[pyfunction]
fn retrieve(query: PyRef<'_, PyParamVector>, corpus: Vec<PyRef<'_, PyParamVector>>, mode: &str, k: usize) -> PyResult<Vec<(usize, f64)>> {
    let mode = match mode {
        "structure" => RetrievalMode::Structure,
        "viewpoint" => RetrievalMode::Viewpoint,
        other => return Err(PyValueError::new_err(format!("unknown retrieval mode `{other}`"))),
    };
    let items: Vec<interp3d::ParamVector> = corpus.iter().map(|p| p.inner.clone()).collect();
    eval::retrieve(&query.inner, &items, mode, k).map_err(err)
}

#[pymodule]
fn pyinterp3d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBaseShapes>()?;
    m.add_class::<PyParamVector>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyInterpreter>()?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(projection_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sample, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_3d, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(azimuth_error, m)?)?;
    m.add_function(wrap_pyfunction!(recall_curve, m)?)?;
    m.add_function(wrap_pyfunction!(pck, m)?)?;
    m.add_function(wrap_pyfunction!(pcp, m)?)?;
    m.add_function(wrap_pyfunction!(average_error, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
