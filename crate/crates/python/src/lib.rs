//! Python module `minsurf`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use engine::degrade::DegradeSpec;
use engine::grid;
use engine::io;
use engine::metrics::{self, SsimParams};
use engine::model::{self, ModelParams, StopRule, DEFAULT_ALPHA};
use engine::solvers::{self, DualUpdate, Method, SolveReport, SolverConfig};
use engine::spectral::{BlurSpec, Spectrum};
use engine::{DualField, Error, ImageGrid};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::InvalidGrid(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::Format(_)
        | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Real-valued image on a periodic lattice; `rows[i][j]`, i down, j across.
#[pyclass(name = "ImageGrid", module = "minsurf", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: ImageGrid,
}

impl From<ImageGrid> for PyGrid {
    fn from(inner: ImageGrid) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        ImageGrid::from_rows(&rows).map(Self::from).map_err(py_err)
    }

    /// Row-major construction: `values[i * width + j]`.
    #[staticmethod]
    fn from_flat(width: usize, height: usize, values: Vec<f64>) -> PyResult<Self> {
        ImageGrid::new(width, height, values)
            .map(Self::from)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, value = 0.0))]
    fn filled(width: usize, height: usize, value: f64) -> PyResult<Self> {
        ImageGrid::filled(width, height, value)
            .map(Self::from)
            .map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.inner.height() || j >= self.inner.width() {
            return Err(PyValueError::new_err(format!(
                "index ({i}, {j}) out of range"
            )));
        }
        Ok(self.inner.get(i, j))
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn inner_product(&self, other: &PyGrid) -> PyResult<f64> {
        self.inner.inner_product(&other.inner).map_err(py_err)
    }

    fn rms_distance(&self, other: &PyGrid) -> PyResult<f64> {
        self.inner.rms_distance(&other.inner).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageGrid(width={}, height={}, mean={:.6})",
            self.inner.width(),
            self.inner.height(),
            self.inner.mean()
        )
    }
}

/// Vector field (p1 along i, p2 along j) on the lattice.
#[pyclass(name = "DualField", module = "minsurf", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDual {
    inner: DualField,
}

#[pymethods]
impl PyDual {
    #[new]
    fn new(width: usize, height: usize, p1: Vec<f64>, p2: Vec<f64>) -> PyResult<Self> {
        DualField::new(width, height, p1, p2)
            .map(|inner| Self { inner })
            .map_err(py_err)
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
    fn p1(&self) -> Vec<f64> {
        self.inner.p1().to_vec()
    }

    #[getter]
    fn p2(&self) -> Vec<f64> {
        self.inner.p2().to_vec()
    }

    fn inner_product(&self, other: &PyDual) -> PyResult<f64> {
        self.inner.inner_product(&other.inner).map_err(py_err)
    }

    fn max_magnitude(&self) -> f64 {
        self.inner.max_magnitude()
    }

    fn __repr__(&self) -> String {
        format!(
            "DualField(width={}, height={})",
            self.inner.width(),
            self.inner.height()
        )
    }
}

fn blur_spec(hsize: Option<usize>, sigma: Option<f64>) -> PyResult<BlurSpec> {
    match (hsize, sigma) {
        (None, None) => Ok(BlurSpec::Identity),
        (Some(h), Some(s)) => BlurSpec::gaussian(h, s).map_err(py_err),
        _ => Err(PyValueError::new_err(
            "blur_hsize and blur_sigma must be given together",
        )),
    }
}

/// Circular convolution operator K and its Fourier symbol.
#[pyclass(name = "Spectrum", module = "minsurf")]
pub struct PySpectrum {
    inner: Spectrum,
}

#[pymethods]
impl PySpectrum {
    /// Identity when both blur arguments are omitted.
    #[new]
    #[pyo3(signature = (width, height, blur_hsize = None, blur_sigma = None))]
    fn new(
        width: usize,
        height: usize,
        blur_hsize: Option<usize>,
        blur_sigma: Option<f64>,
    ) -> PyResult<Self> {
        let spec = blur_spec(blur_hsize, blur_sigma)?;
        Spectrum::from_blur(spec, width, height)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn is_identity(&self) -> bool {
        self.inner.is_identity()
    }

    fn apply(&self, u: &PyGrid) -> PyResult<PyGrid> {
        self.inner.apply(&u.inner).map(PyGrid::from).map_err(py_err)
    }

    fn apply_adjoint(&self, u: &PyGrid) -> PyResult<PyGrid> {
        self.inner
            .apply_adjoint(&u.inner)
            .map(PyGrid::from)
            .map_err(py_err)
    }
}

/// Outcome of one solver run.
#[pyclass(name = "SolveReport", module = "minsurf")]
pub struct PyReport {
    inner: SolveReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn energy_trace(&self) -> Vec<f64> {
        self.inner.energy_trace.clone()
    }

    #[getter]
    fn rel_change_trace(&self) -> Vec<f64> {
        self.inner.rel_change_trace.clone()
    }

    #[getter]
    fn wall_time_seconds(&self) -> f64 {
        self.inner.wall_time_seconds
    }

    #[getter]
    fn cg_iterations(&self) -> Vec<usize> {
        self.inner.cg_iterations.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn final_energy(&self) -> f64 {
        self.inner.final_energy()
    }

    #[getter]
    fn restored(&self) -> PyGrid {
        self.inner.final_u().clone().into()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(method={}, iterations={}, converged={})",
            self.inner.method.as_str(),
            self.inner.iterations,
            self.inner.converged
        )
    }
}

#[pyfunction]
fn gradient(u: &PyGrid) -> PyDual {
    PyDual {
        inner: grid::gradient(&u.inner),
    }
}

#[pyfunction]
fn divergence(p: &PyDual) -> PyGrid {
    grid::divergence(&p.inner).into()
}

#[pyfunction]
#[pyo3(signature = (f, u, lam, alpha = DEFAULT_ALPHA, spectrum = None))]
fn energy(
    f: &PyGrid,
    u: &PyGrid,
    lam: f64,
    alpha: f64,
    spectrum: Option<&PySpectrum>,
) -> PyResult<f64> {
    let params = ModelParams::new(lam, alpha).map_err(py_err)?;
    let identity;
    let s = match spectrum {
        Some(s) => &s.inner,
        None => {
            identity = Spectrum::identity(f.inner.width(), f.inner.height()).map_err(py_err)?;
            &identity
        }
    };
    model::energy(&params, s, &f.inner, &u.inner).map_err(py_err)
}

/// Runs `pdm`, `tmm` or `fpm`; unset steps take the library defaults.
#[pyfunction]
#[pyo3(signature = (
    f, lam, method = "pdm", alpha = DEFAULT_ALPHA, spectrum = None, *,
    tau = None, sigma_step = None, dual_update = None, dt = None,
    max_iter = None, rel_tol = None, cg_tol = None, cg_max_iter = None
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    f: &PyGrid,
    lam: f64,
    method: &str,
    alpha: f64,
    spectrum: Option<&PySpectrum>,
    tau: Option<f64>,
    sigma_step: Option<f64>,
    dual_update: Option<&str>,
    dt: Option<f64>,
    max_iter: Option<usize>,
    rel_tol: Option<f64>,
    cg_tol: Option<f64>,
    cg_max_iter: Option<usize>,
) -> PyResult<PyReport> {
    let method: Method = method.parse().map_err(py_err)?;
    let mut cfg =
        SolverConfig::new(ModelParams::new(lam, alpha).map_err(py_err)?).map_err(py_err)?;
    let defaults = StopRule::default();
    cfg.stop = StopRule::new(
        rel_tol.unwrap_or(defaults.rel_tol),
        max_iter.unwrap_or(defaults.max_iter),
    )
    .map_err(py_err)?;
    cfg.tau = tau.unwrap_or(cfg.tau);
    cfg.sigma_step = sigma_step.unwrap_or(cfg.sigma_step);
    if let Some(d) = dual_update {
        cfg.dual_update = d.parse::<DualUpdate>().map_err(py_err)?;
    }
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.cg_tol = cg_tol.unwrap_or(cfg.cg_tol);
    cfg.cg_max_iter = cg_max_iter.unwrap_or(cfg.cg_max_iter);

    let identity;
    let s = match spectrum {
        Some(s) => &s.inner,
        None => {
            identity = Spectrum::identity(f.inner.width(), f.inner.height()).map_err(py_err)?;
            &identity
        }
    };
    let f = &f.inner;
    py.detach(|| solvers::solve(method, &cfg, s, f))
        .map(|inner| PyReport { inner })
        .map_err(py_err)
}

/// Linear stretch onto [0, 255].
#[pyfunction]
fn normalize(raw: &PyGrid) -> PyResult<PyGrid> {
    engine::degrade::normalize(&raw.inner)
        .map(PyGrid::from)
        .map_err(py_err)
}

/// Blur then add seeded Gaussian noise; `clean` is used as given.
#[pyfunction]
#[pyo3(signature = (clean, sigma, seed = 0, blur_hsize = None, blur_sigma = None))]
fn degrade(
    clean: &PyGrid,
    sigma: f64,
    seed: u64,
    blur_hsize: Option<usize>,
    blur_sigma: Option<f64>,
) -> PyResult<PyGrid> {
    let spec = DegradeSpec {
        noise_sigma: sigma,
        blur: blur_spec(blur_hsize, blur_sigma)?,
        seed,
    };
    engine::degrade::degrade(&spec, &clean.inner)
        .map(PyGrid::from)
        .map_err(py_err)
}

#[pyfunction]
fn snr(reference: &PyGrid, test: &PyGrid) -> PyResult<f64> {
    metrics::snr(&reference.inner, &test.inner).map_err(py_err)
}

#[pyfunction]
fn ssim(reference: &PyGrid, test: &PyGrid) -> PyResult<f64> {
    metrics::ssim(&reference.inner, &test.inner, &SsimParams::default()).map_err(py_err)
}

/// PGM (P5) or F64GRID, detected from the file header.
#[pyfunction]
fn read_image(path: PathBuf) -> PyResult<PyGrid> {
    io::read_image(path).map(PyGrid::from).map_err(py_err)
}

#[pyfunction]
fn write_grid(path: PathBuf, grid: &PyGrid) -> PyResult<()> {
    io::write_grid(path, &grid.inner).map_err(py_err)
}

#[pyfunction]
fn write_pgm(path: PathBuf, grid: &PyGrid) -> PyResult<()> {
    io::write_pgm(path, &grid.inner).map_err(py_err)
}

/// Power-iteration estimate of the largest eigenvalue of −div∇.
#[pyfunction]
fn operator_norm(width: usize, height: usize) -> PyResult<f64> {
    solvers::operator_norm_check(width, height).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "minsurf")]
fn minsurf_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDual>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(divergence, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(snr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_grid, m)?)?;
    m.add_function(wrap_pyfunction!(write_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(operator_norm, m)?)?;
    m.add("NOISE_GENERATOR", engine::degrade::NOISE_GENERATOR)?;
    Ok(())
}
