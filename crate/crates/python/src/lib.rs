use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use msgate::analytic::{self, ErrorSetting};
use msgate::design::{self, Family, ToneIndexSet};
use msgate::oracle::{self, SimConfig};
use msgate::scan::{self, ScanSpec};
use msgate::verify::{self, Fault, Level};
use msgate::Error;

create_exception!(pymsgate, NumericalError, PyException, "A computation failed to converge or lost accuracy.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DegenerateNullSpace(_)
        | Error::NotNormalizable(_)
        | Error::SeriesNonConvergence(_)
        | Error::DivergentCarrierSeries(_)
        | Error::TruncationLeakage { .. }
        | Error::StepNotConverged { .. }
        | Error::EnsembleTruncation { .. }
        | Error::InsufficientPoints(_) => NumericalError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Convert any serializable value into plain Python objects.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tones(t: Vec<i64>) -> PyResult<ToneIndexSet> {
    ToneIndexSet::new(t).map_err(to_py)
}

fn setting(dt_rel: f64, dnu_rel: f64, nbar: f64) -> PyResult<ErrorSetting> {
    ErrorSetting::new(dt_rel, dnu_rel, nbar).map_err(to_py)
}

/// A normalized multi-tone gate: tone indices and signed amplitudes.
#[pyclass(name = "GateDesign", module = "pymsgate", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyGateDesign {
    inner: design::GateDesign,
}

#[pymethods]
impl PyGateDesign {
    /// A custom design; the amplitudes must satisfy `sum r_i^2 / n_i = 1`.
    #[new]
    fn new(tones: Vec<i64>, amplitudes: Vec<f64>) -> PyResult<Self> {
        let inner = design::GateDesign::custom(self::tones(tones)?, amplitudes).map_err(to_py)?;
        Ok(PyGateDesign { inner })
    }

    #[staticmethod]
    fn ms() -> Self {
        PyGateDesign { inner: design::design_ms() }
    }

    #[staticmethod]
    fn cardioid(tones: Vec<i64>) -> PyResult<Self> {
        Ok(PyGateDesign { inner: design::design_cardioid(&self::tones(tones)?).map_err(to_py)? })
    }

    #[staticmethod]
    fn antioid(tones: Vec<i64>) -> PyResult<Self> {
        Ok(PyGateDesign { inner: design::design_antioid(&self::tones(tones)?).map_err(to_py)? })
    }

    #[staticmethod]
    fn carnu(tones: Vec<i64>) -> PyResult<Self> {
        Ok(PyGateDesign { inner: design::design_carnu(&self::tones(tones)?).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (tones, nbar=0.17))]
    fn carnu_minimized(tones: Vec<i64>, nbar: f64) -> PyResult<Self> {
        let inner = design::design_carnu_minimized(&self::tones(tones)?, nbar).map_err(to_py)?;
        Ok(PyGateDesign { inner })
    }

    /// Build a design by family name: ms, cardioid, antioid or carnu.
    #[staticmethod]
    #[pyo3(signature = (family, tones=Vec::new()))]
    fn family(family: &str, tones: Vec<i64>) -> PyResult<Self> {
        let f: Family = family.parse().map_err(to_py)?;
        Ok(PyGateDesign { inner: design::design_family(f, &tones).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGateDesign { inner: design::GateDesign::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn family_name(&self) -> &'static str {
        self.inner.family().as_str()
    }

    #[getter]
    fn tones(&self) -> Vec<i64> {
        self.inner.tones().as_slice().to_vec()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<f64> {
        self.inner.amplitudes().to_vec()
    }

    /// `sum r_i^2 / n_i`, equal to 1 for every valid design.
    fn normalization(&self) -> f64 {
        self.inner.normalization()
    }

    /// Displacement `(F, G)` and accumulated phase `A` at time `t`.
    #[pyo3(signature = (t, dnu_rel=0.0))]
    fn trajectory(&self, t: f64, dnu_rel: f64) -> (f64, f64, f64) {
        let p = analytic::trajectory_point(&self.inner, t, dnu_rel);
        (p.f, p.g, p.a)
    }

    /// Bell-state fidelity at time `t` under timing, detuning and thermal errors.
    #[pyo3(signature = (t=1.0, dt_rel=0.0, dnu_rel=0.0, nbar=0.0))]
    fn fidelity(&self, t: f64, dt_rel: f64, dnu_rel: f64, nbar: f64) -> PyResult<f64> {
        Ok(analytic::populations(&self.inner, t, &setting(dt_rel, dnu_rel, nbar)?).fidelity)
    }

    /// Populations, fidelity and purity as a dict.
    #[pyo3(signature = (t=1.0, dt_rel=0.0, dnu_rel=0.0, nbar=0.0))]
    fn populations<'py>(
        &self,
        py: Python<'py>,
        t: f64,
        dt_rel: f64,
        dnu_rel: f64,
        nbar: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let q = analytic::populations(&self.inner, t, &setting(dt_rel, dnu_rel, nbar)?);
        to_object(py, &q)
    }

    /// Quadratic coefficient of the infidelity in `dnu / xi0`.
    #[pyo3(signature = (nbar=0.17))]
    fn detuning_prefactor(&self, nbar: f64) -> f64 {
        design::detuning_prefactor(&self.inner, nbar)
    }

    fn __repr__(&self) -> String {
        format!("GateDesign({}, r={:?})", self.inner.id(), self.inner.amplitudes())
    }
}

/// `(admissible, violations)` for a tone set, violations as strings like `1+1-2=0`.
#[pyfunction]
fn validate_tone_set(tones: Vec<i64>) -> PyResult<(bool, Vec<String>)> {
    let report = design::validate_tone_set(&self::tones(tones)?);
    Ok((report.admissible, report.violations.iter().map(|v| v.to_string()).collect()))
}

/// Thermal populations from the Hamiltonian oracle at the given nominal times.
///
/// `config` is an optional dict with the same keys as the `oracle` block of a
/// scan spec (n_max, mode, nu, eta, step_tolerance, ...).
#[pyfunction]
#[pyo3(signature = (design, times, nbar=0.0, dt_rel=0.0, dnu_rel=0.0, config=None))]
fn simulate<'py>(
    py: Python<'py>,
    design: &PyGateDesign,
    times: Vec<f64>,
    nbar: f64,
    dt_rel: f64,
    dnu_rel: f64,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SimConfig = match config {
        Some(obj) => {
            let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => SimConfig::default(),
    };
    let err = setting(dt_rel, dnu_rel, nbar)?;
    let d = design.inner.clone();
    let out = py
        .detach(move || oracle::thermal_average_at(&d, &cfg, &err, &times))
        .map_err(to_py)?;
    to_object(py, &out)
}

/// Run a scan spec given as JSON; returns `(rows, summary)`.
#[pyfunction]
fn run_scan<'py>(py: Python<'py>, spec: &str) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let spec = ScanSpec::from_json(spec).map_err(to_py)?;
    let (rows, summary) = py
        .detach(|| scan::run_scan(&spec).map(|rows| {
            let summary = scan::summarize(&spec, &rows);
            (rows, summary)
        }))
        .map_err(to_py)?;
    Ok((to_object(py, &rows)?, to_object(py, &summary)?))
}

/// Run the self-check suites at level `quick` or `full`.
#[pyfunction]
#[pyo3(signature = (level="quick", broken_normalization=false))]
fn run_verify<'py>(py: Python<'py>, level: &str, broken_normalization: bool) -> PyResult<Bound<'py, PyAny>> {
    let level = match level {
        "quick" => Level::Quick,
        "full" => Level::Full,
        other => return Err(PyValueError::new_err(format!("unknown level {other:?}"))),
    };
    let fault = broken_normalization.then_some(Fault::BrokenNormalization);
    let report = py.detach(|| verify::run_verify(level, fault));
    to_object(py, &report)
}

#[pymodule]
fn pymsgate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGateDesign>()?;
    m.add_function(wrap_pyfunction!(validate_tone_set, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_scan, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
