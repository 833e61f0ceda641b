//! Python module `teastore`. Configurations, requests, fault specs and
//! reports cross the boundary as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde_json::Value;

pub mod ops;

fn err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = PyModule::import(obj.py(), "json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_value<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &v.to_string())
}

/// Validation result for a configuration dict or level name.
#[pyfunction]
fn validate<'py>(config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    from_value(config.py(), &ops::validate_config(to_json(config)?).map_err(err)?)
}

/// Every valid configuration.
#[pyfunction]
fn enumerate(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    from_value(py, &ops::enumerate())
}

/// The valid configuration closest to `current` that honors `request`.
#[pyfunction]
fn complete<'py>(request: &Bound<'py, PyAny>, current: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    from_value(request.py(), &ops::complete(to_json(request)?, to_json(current)?).map_err(err)?)
}

#[pyfunction]
fn scenario_names() -> Vec<String> {
    ops::scenario_names()
}

/// Runs a builtin scenario (by name) or a script (as JSON text) and returns
/// the report as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn run_scenario<'py>(py: Python<'py>, scenario: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let text = py.detach(|| ops::run(scenario, seed)).map_err(err)?;
    from_json(py, &text)
}

/// The report exactly as the command line writes it.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn run_scenario_json(py: Python<'_>, scenario: &str, seed: Option<u64>) -> PyResult<String> {
    py.detach(|| ops::run(scenario, seed)).map_err(err)
}

/// A live simulation with baseline traffic, advanced explicitly.
#[pyclass(unsendable)]
struct Simulation {
    inner: ops::Live,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config, seed=42))]
    fn new(config: &Bound<'_, PyAny>, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: ops::Live::new(to_json(config)?, seed).map_err(err)? })
    }

    #[getter]
    fn now(&self) -> u64 {
        self.inner.0.now()
    }

    fn advance(&mut self, ms: u64) {
        self.inner.0.advance_by(ms);
    }

    fn advance_to(&mut self, t: u64) {
        self.inner.0.advance_to(t);
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_value(py, &serde_json::to_value(self.inner.0.config()).expect("configuration serializes"))
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_value(py, &self.inner.state())
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_value(py, &serde_json::to_value(self.inner.0.metrics()).expect("metrics serialize"))
    }

    fn reconfigure<'py>(&mut self, request: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        from_value(request.py(), &self.inner.reconfigure(to_json(request)?).map_err(err)?)
    }

    fn inject_fault(&mut self, spec: &Bound<'_, PyAny>) -> PyResult<u64> {
        self.inner.inject_fault(to_json(spec)?).map_err(err)
    }

    fn clear_fault(&mut self, id: u64) -> PyResult<()> {
        self.inner.clear_fault(id).map_err(err)
    }

    #[pyo3(signature = (since=0))]
    fn records<'py>(&self, py: Python<'py>, since: usize) -> PyResult<Bound<'py, PyAny>> {
        from_value(py, &self.inner.records(since))
    }

    fn log_hash(&self) -> String {
        self.inner.0.log_hash()
    }
}

#[pymodule]
fn teastore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(complete, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_json, m)?)?;
    m.add_class::<Simulation>()?;
    Ok(())
}
