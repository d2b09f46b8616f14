use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use embedlab::gaussian::{BackendKind, GaussianFamily};
use embedlab::glue::{self, GluedEmbedding};
use embedlab::report::{self, BackendChoice, FolnerConfig, GroupChoice, ModuliConfig, Suite, SuiteOptions};
use embedlab::{mazur, metric, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::UnknownName(_) | Error::BelowRange { .. } | Error::LengthMismatch(..) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<PyObject> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py(py),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_py(py),
            (None, Some(f)) => f.into_py(py),
            _ => py.None(),
        },
        Value::String(s) => s.into_py(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new_bound(py, items).into_py(py)
        }
        Value::Object(o) => {
            let d = PyDict::new_bound(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_py(py)
        }
    })
}

fn json_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<PyObject> {
    let v = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Certified two-sided constants of the Mazur map between unit spheres.
#[pyclass(name = "MazurConstants", frozen)]
struct PyMazurConstants(mazur::MazurConstants);

#[pymethods]
impl PyMazurConstants {
    #[new]
    fn new(p: f64, q: f64) -> PyResult<Self> {
        mazur::MazurConstants::new(p, q).map(Self).map_err(err)
    }

    #[getter]
    fn c_lower(&self) -> f64 {
        self.0.c_lower
    }

    #[getter]
    fn c_upper(&self) -> f64 {
        self.0.c_upper
    }

    /// (lower, upper) bounds on Σ|Mx−My|^q given Σ|x−y|^p.
    fn target_mass_bounds(&self, source: f64) -> (f64, f64) {
        self.0.target_mass_bounds(source)
    }

    fn corrupted(&self, factor: f64) -> Self {
        Self(self.0.corrupted(factor))
    }

    fn __repr__(&self) -> String {
        format!("MazurConstants(p={}, q={}, c_lower={}, c_upper={})", self.0.p, self.0.q, self.0.c_lower, self.0.c_upper)
    }
}

#[pyfunction]
fn mazur_map(x: Vec<f64>, p: f64, q: f64) -> Vec<f64> {
    mazur::mazur_slice(&x, p, q)
}

#[pyfunction]
#[pyo3(signature = (p, q, samples=100_000, seed=7, dim=16))]
fn mazur_bounds_check(py: Python<'_>, p: f64, q: f64, samples: usize, seed: u64, dim: usize) -> PyResult<PyObject> {
    let r = py.allow_threads(|| mazur::mazur_bounds_check(p, q, samples, seed, dim)).map_err(err)?;
    json_py(py, &r)
}

/// √(2(1 − e^{−r d²})), the exact distance of Gaussian feature maps.
#[pyfunction]
fn psi_distance(d: f64, r: f64) -> f64 {
    embedlab::gaussian::psi_distance_exact(d, r)
}

#[pyfunction]
fn h_ab(a: f64, b: f64, t: f64) -> PyResult<f64> {
    metric::h_ab(a, b, t).map_err(err)
}

/// Glued embedding ℓ2 → ℓq built from a named parameter schedule.
#[pyclass(name = "GluedEmbedding", frozen)]
struct PyGluedEmbedding {
    inner: GluedEmbedding<GaussianFamily>,
    dim: usize,
}

#[pymethods]
impl PyGluedEmbedding {
    #[new]
    #[pyo3(signature = (schedule, q=2.0, beta=None, nu=None, backend="kernel", features=64, terms=200, dim=16, seed=7))]
    #[allow(clippy::too_many_arguments)]
    fn new(schedule: &str, q: f64, beta: Option<f64>, nu: Option<f64>, backend: &str, features: usize, terms: usize, dim: usize, seed: u64) -> PyResult<Self> {
        let s = glue::preset_schedule(schedule, q, beta, nu).map_err(err)?;
        let kind = match backend.parse::<BackendChoice>().map_err(err)? {
            BackendChoice::Kernel => BackendKind::KernelExact,
            BackendChoice::Rff => BackendKind::RandomFeatures { dim: features, seed },
            BackendChoice::Exp => return Err(PyValueError::new_err("pairwise evaluation uses the kernel or rff backend")),
        };
        let family = GaussianFamily::new(s.q, s.bandwidth.clone(), &kind, dim).map_err(err)?;
        let inner = glue::glue(family, s, vec![0.0; dim], terms).map_err(err)?;
        Ok(Self { inner, dim })
    }

    fn distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(PyValueError::new_err(format!("points must have dimension {}", self.dim)));
        }
        Ok(self.inner.distance(&x, &y))
    }

    /// Certified (lower, upper) bounds on the image distance at domain distance d.
    fn distance_bounds(&self, d: f64) -> (f64, f64) {
        self.inner.certified_envelopes(d)
    }

    fn schedule(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.schedule().to_json(self.inner.terms()))
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Runs a moduli estimation; keyword arguments override the default configuration.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn run_moduli(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<(PyObject, String)> {
    let mut v = serde_json::to_value(ModuliConfig::default()).expect("serializable config");
    if let Some(kw) = kwargs {
        let json = py.import_bound("json")?;
        let text: String = json.call_method1("dumps", (kw,))?.extract()?;
        let over: Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        for (k, x) in over.as_object().into_iter().flatten() {
            v[k] = x.clone();
        }
    }
    let cfg: ModuliConfig = serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let run = py.allow_threads(|| report::run_moduli(&cfg)).map_err(err)?;
    Ok((to_py(py, &run.summary_json())?, run.estimate.to_csv()))
}

#[pyfunction]
#[pyo3(signature = (suite, seed=7, scale=1.0))]
fn run_suite(py: Python<'_>, suite: &str, seed: u64, scale: f64) -> PyResult<PyObject> {
    let s: Suite = parse(suite)?;
    let opts = SuiteOptions { seed, scale, gluing: None };
    let r = py.allow_threads(|| report::run_suite(s, &opts)).map_err(err)?;
    json_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (m, p=1.0, target_type=2.0))]
fn cube_report(py: Python<'_>, m: u32, p: f64, target_type: f64) -> PyResult<PyObject> {
    json_py(py, &report::cube_report(m, p, target_type).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (k, ground, p=1.0))]
fn gk_report(py: Python<'_>, k: usize, ground: usize, p: f64) -> PyResult<PyObject> {
    json_py(py, &report::gk_report(k, ground, p).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (group="z2", n_max=10, p=1.0, pairs=2000, bins=20, seed=7))]
fn run_folner(py: Python<'_>, group: &str, n_max: usize, p: f64, pairs: usize, bins: usize, seed: u64) -> PyResult<(PyObject, String)> {
    let cfg = FolnerConfig { group: parse::<GroupChoice>(group)?, n_max, p, pairs, bins, seed };
    let run = py.allow_threads(|| report::run_folner(&cfg)).map_err(err)?;
    Ok((json_py(py, &run)?, run.to_csv()))
}

#[pymodule]
pub fn embedlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMazurConstants>()?;
    m.add_class::<PyGluedEmbedding>()?;
    m.add_function(wrap_pyfunction!(mazur_map, m)?)?;
    m.add_function(wrap_pyfunction!(mazur_bounds_check, m)?)?;
    m.add_function(wrap_pyfunction!(psi_distance, m)?)?;
    m.add_function(wrap_pyfunction!(h_ab, m)?)?;
    m.add_function(wrap_pyfunction!(run_moduli, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(cube_report, m)?)?;
    m.add_function(wrap_pyfunction!(gk_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_folner, m)?)?;
    Ok(())
}
