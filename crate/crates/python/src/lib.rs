//! Python bindings: beliefs, sensors, the GF and RGF steps, the benchmark
//! runner and the self-test.
//!
//! Vectors cross the boundary as lists of floats and matrices as lists of
//! rows. Every stochastic call takes an explicit `seed`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgf_core::benchmarks::{run_experiment, write_csv_file, BackendKind, ExperimentConfig, FilterKind, Scenario, TailPair};
use rgf_core::gf;
use rgf_core::models::{LinearGaussianSensor, LinearTransition, RadarConstants, Tail, TailedSensorModel};
use rgf_core::robust;
use rgf_core::selftest::{run_selftest, SelftestOptions};
use rgf_core::{Error, GaussianDensity, Matrix, Vector};

create_exception!(rgf, RgfError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Argument(_) | Error::Dimension { .. } | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => RgfError::new_err(e.to_string()),
    }
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(Matrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian state belief N(mean, covariance).
#[pyclass(name = "GaussianBelief", module = "rgf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBelief(gf::GaussianBelief);

#[pymethods]
impl PyBelief {
    #[new]
    fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(gf::GaussianBelief::new(vector(mean), matrix(covariance)?).map_err(to_py)?))
    }

    #[staticmethod]
    fn scalar(mean: f64, variance: f64) -> PyResult<Self> {
        Ok(Self(gf::GaussianBelief::scalar(mean, variance).map_err(to_py)?))
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean().iter().copied().collect()
    }

    #[getter]
    fn covariance(&self) -> Vec<Vec<f64>> {
        rows(self.0.covariance())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("GaussianBelief(mean={:?}, covariance={:?})", self.mean(), self.covariance())
    }
}

/// Moment-propagation backend.
#[pyclass(name = "Backend", module = "rgf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBackend(gf::Backend);

#[pymethods]
impl PyBackend {
    #[staticmethod]
    fn exact_linear() -> Self {
        Self(gf::Backend::exact_linear())
    }

    #[staticmethod]
    fn unscented() -> Self {
        Self(gf::Backend::unscented())
    }

    #[staticmethod]
    #[pyo3(signature = (samples = gf::DEFAULT_MC_SAMPLES))]
    fn monte_carlo(samples: usize) -> Self {
        Self(gf::Backend::monte_carlo(samples))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn __repr__(&self) -> String {
        format!("Backend.{}", self.0.name().replace('-', "_"))
    }
}

/// Linear body `N(y | A x + a, P)` mixed with a Cauchy tail of weight omega.
#[pyclass(name = "TailedSensor", module = "rgf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySensor {
    model: TailedSensorModel,
    body: LinearGaussianSensor,
}

#[pymethods]
impl PySensor {
    #[new]
    fn new(
        matrix_rows: Vec<Vec<f64>>,
        offset: Vec<f64>,
        noise_covariance: Vec<Vec<f64>>,
        cauchy_scale: Vec<f64>,
        omega: f64,
    ) -> PyResult<Self> {
        let body = LinearGaussianSensor::new(matrix(matrix_rows)?, vector(offset), matrix(noise_covariance)?)
            .map_err(to_py)?;
        let tail = Tail::cauchy(vector(cauchy_scale)).map_err(to_py)?;
        let model = TailedSensorModel::linear(&body, tail, omega).map_err(to_py)?;
        Ok(Self { model, body })
    }

    /// `(1 - omega) N(y|x, body_var) + omega C(y|x, gamma)`.
    #[staticmethod]
    fn scalar_cauchy(body_var: f64, gamma: f64, omega: f64) -> PyResult<Self> {
        Self::new(vec![vec![1.0]], vec![0.0], vec![vec![body_var]], vec![gamma], omega)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.model.tail_weight()
    }

    /// Log-density of the full mixture at `y` given state `x`.
    fn logpdf(&self, y: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        self.model.logpdf(&vector(y), &vector(x)).map_err(to_py)
    }
}

/// Linear transition `x' = F x + L v`, `v ~ N(0, I)`.
#[pyclass(name = "LinearTransition", module = "rgf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTransition(LinearTransition);

#[pymethods]
impl PyTransition {
    #[new]
    fn new(matrix_rows: Vec<Vec<f64>>, noise_gain: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(LinearTransition::new(matrix(matrix_rows)?, matrix(noise_gain)?).map_err(to_py)?))
    }

    #[staticmethod]
    fn random_walk(sigma: f64) -> Self {
        Self(LinearTransition::random_walk(sigma))
    }
}

/// GF prediction through the transition.
#[pyfunction]
#[pyo3(signature = (belief, transition, backend, seed = 0))]
fn predict(belief: &PyBelief, transition: &PyTransition, backend: &PyBackend, seed: u64) -> PyResult<PyBelief> {
    gf::predict(&belief.0, &transition.0, &backend.0, &mut rng(seed))
        .map(PyBelief)
        .map_err(to_py)
}

/// Plain GF update with the body of `sensor` only (the tail is ignored).
#[pyfunction]
#[pyo3(signature = (belief, sensor, y, backend, seed = 0))]
fn gf_update(belief: &PyBelief, sensor: &PySensor, y: Vec<f64>, backend: &PyBackend, seed: u64) -> PyResult<PyBelief> {
    let body = &sensor.body;
    let noise: GaussianDensity = body.noise().map_err(to_py)?;
    gf::update(
        &belief.0,
        |x, w| &body.matrix * x + &body.offset + w,
        &noise,
        &vector(y),
        &backend.0,
        &mut rng(seed),
    )
    .map(PyBelief)
    .map_err(to_py)
}

/// Measurement feature `(c0, c1, c2)` at the predicted `belief`.
#[pyfunction]
#[pyo3(signature = (y, belief, sensor, backend, seed = 0))]
fn feature(
    y: Vec<f64>,
    belief: &PyBelief,
    sensor: &PySensor,
    backend: &PyBackend,
    seed: u64,
) -> PyResult<(f64, Vec<f64>, f64)> {
    let ctx = robust::feature_context(&belief.0, &sensor.model, &backend.0, &mut rng(seed)).map_err(to_py)?;
    let f = robust::feature(&vector(y), &ctx).map_err(to_py)?;
    Ok((f.c0, f.c1.iter().copied().collect(), f.c2))
}

/// Responsibility-weighted posterior mean for the linear body.
#[pyfunction]
fn approx_posterior_mean(y: Vec<f64>, belief: &PyBelief, sensor: &PySensor) -> PyResult<Vec<f64>> {
    let backend = gf::Backend::exact_linear();
    let ctx = robust::feature_context(&belief.0, &sensor.model, &backend, &mut rng(0)).map_err(to_py)?;
    let (gain, offset) = robust::linear_gain(&belief.0, &sensor.body).map_err(to_py)?;
    let mean = robust::approx_posterior_mean(&vector(y), &ctx, &gain, &offset).map_err(to_py)?;
    Ok(mean.iter().copied().collect())
}

/// Robust update: a GF update in feature space.
#[pyfunction]
#[pyo3(signature = (belief, sensor, y, backend, seed = 0))]
fn rgf_update(belief: &PyBelief, sensor: &PySensor, y: Vec<f64>, backend: &PyBackend, seed: u64) -> PyResult<PyBelief> {
    robust::rgf_update(&belief.0, &sensor.model, &vector(y), &backend.0, &mut rng(seed))
        .map(PyBelief)
        .map_err(to_py)
}

/// Predict, then update when `y` is given.
#[pyfunction]
#[pyo3(signature = (belief, transition, sensor, y, backend, seed = 0))]
fn rgf_step(
    belief: &PyBelief,
    transition: &PyTransition,
    sensor: &PySensor,
    y: Option<Vec<f64>>,
    backend: &PyBackend,
    seed: u64,
) -> PyResult<PyBelief> {
    let y = y.map(vector);
    robust::rgf_step(&belief.0, &transition.0, &sensor.model, y.as_ref(), &backend.0, &mut rng(seed))
        .map(PyBelief)
        .map_err(to_py)
}

/// Run a benchmark scenario (`linear`, `sweep` or `radar`) and return the
/// JSON summary. `out` writes the per-step CSV as well.
#[pyfunction]
#[pyo3(signature = (
    scenario, seeds = None, seed_offset = 0, steps = None, backend = "monte-carlo",
    samples = gf::DEFAULT_MC_SAMPLES, filters = None, omega = None, gamma = None,
    pairs = None, radar_config = None, out = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_benchmark(
    py: Python<'_>,
    scenario: &str,
    seeds: Option<u64>,
    seed_offset: u64,
    steps: Option<usize>,
    backend: &str,
    samples: usize,
    filters: Option<Vec<String>>,
    omega: Option<f64>,
    gamma: Option<f64>,
    pairs: Option<Vec<String>>,
    radar_config: Option<String>,
    out: Option<PathBuf>,
) -> PyResult<String> {
    let mut cfg = match scenario {
        "linear" => ExperimentConfig::linear_example(),
        "sweep" => ExperimentConfig::sweep(),
        "radar" => ExperimentConfig::radar(),
        other => return Err(PyValueError::new_err(format!("unknown scenario '{other}'"))),
    };
    let count = seeds.unwrap_or(cfg.seeds.len() as u64);
    cfg.seeds = (seed_offset..seed_offset.saturating_add(count)).collect();
    cfg.backend = backend.parse::<BackendKind>().map_err(to_py)?;
    cfg.samples = samples;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(f) = filters {
        cfg.filters = f.iter().map(|n| n.parse::<FilterKind>()).collect::<Result<_, _>>().map_err(to_py)?;
    }
    cfg.omega = omega.unwrap_or(cfg.omega);
    cfg.gamma = gamma.unwrap_or(cfg.gamma);
    if let Some(p) = pairs {
        cfg.pairs = p.iter().map(|n| TailPair::named(n)).collect::<Result<_, _>>().map_err(to_py)?;
    }
    if let Some(text) = radar_config {
        if cfg.scenario != Scenario::Radar {
            return Err(PyValueError::new_err("radar_config applies to the radar scenario only"));
        }
        cfg.radar = RadarConstants::from_json(&text).map_err(to_py)?;
    }
    cfg.validate().map_err(to_py)?;
    let result = py.detach(|| run_experiment(&cfg)).map_err(to_py)?;
    if let Some(path) = out {
        write_csv_file(&result.logs, &path).map_err(to_py)?;
    }
    result.report.to_json().map_err(to_py)
}

/// Built-in numerical checks as `(name, passed, detail)` tuples.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(|| run_selftest(&SelftestOptions::default()))
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn rgf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RgfError", m.py().get_type::<RgfError>())?;
    m.add_class::<PyBelief>()?;
    m.add_class::<PyBackend>()?;
    m.add_class::<PySensor>()?;
    m.add_class::<PyTransition>()?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(gf_update, m)?)?;
    m.add_function(wrap_pyfunction!(feature, m)?)?;
    m.add_function(wrap_pyfunction!(approx_posterior_mean, m)?)?;
    m.add_function(wrap_pyfunction!(rgf_update, m)?)?;
    m.add_function(wrap_pyfunction!(rgf_step, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
