//! Python bindings. Results that are plain data come back as dicts and
//! lists; scenarios, rule sets and distributions are wrapped classes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rulesim::harness::{self, CompareMode, Thresholds};
use rulesim::nondemolition::{self, DetectorPrep};
use rulesim::scenario::{self, CATALOG};
use rulesim::{OutcomeDistribution, Regime};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Scenario", module = "pyrulesim", frozen)]
struct PyScenario {
    inner: rulesim::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        scenario::parse(text).map(|inner| Self { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        scenario::builtin(name).map(|inner| Self { inner }).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn components(&self) -> Vec<String> {
        self.inner.components.iter().map(|c| c.id.clone()).collect()
    }

    fn format(&self) -> String {
        self.inner.format()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scenario::validate(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name)
    }
}

#[pyclass(name = "RuleSet", module = "pyrulesim", frozen)]
struct PyRuleSet {
    inner: rulesim::RuleSet,
}

#[pymethods]
impl PyRuleSet {
    #[new]
    #[pyo3(signature = (regime = "observer", rule4 = true, coherent_1a = false))]
    fn new(regime: &str, rule4: bool, coherent_1a: bool) -> PyResult<Self> {
        let regime: Regime = regime.parse().map_err(PyValueError::new_err)?;
        let mut inner = rulesim::RuleSet::of(regime);
        if !rule4 {
            inner = inner.without_rule4();
        }
        if coherent_1a {
            inner = inner.with_coherent_1a();
        }
        Ok(Self { inner })
    }

    #[getter]
    fn regime(&self) -> String {
        self.inner.regime.to_string()
    }

    fn active_rules(&self) -> Vec<String> {
        self.inner.active_rules().iter().map(|r| r.id().to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "RuleSet(regime={:?}, rule4={}, coherent_1a={})",
            self.regime(),
            self.inner.rule4,
            self.inner.coherent_1a
        )
    }
}

#[pyclass(name = "Distribution", module = "pyrulesim", frozen)]
struct PyDistribution {
    inner: OutcomeDistribution,
}

#[pymethods]
impl PyDistribution {
    /// Record key to probability.
    fn probabilities(&self) -> Vec<(String, f64)> {
        self.inner
            .probabilities
            .iter()
            .map(|(r, p)| (r.key(), *p))
            .collect()
    }

    #[getter]
    fn samples(&self) -> Option<u64> {
        self.inner.samples
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.to_json())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    CATALOG.to_vec()
}

#[pyfunction]
#[pyo3(signature = (scenario, rules, slices = 64))]
fn enumerate(scenario: &PyScenario, rules: &PyRuleSet, slices: usize) -> PyResult<PyDistribution> {
    harness::enumerate_outcomes(&scenario.inner, rules.inner, slices)
        .map(|inner| PyDistribution { inner })
        .map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (scenario, rules, trials, seed = 0))]
fn run_trials(py: Python<'_>, scenario: &PyScenario, rules: &PyRuleSet, trials: u64, seed: u64) -> PyResult<PyDistribution> {
    let (s, r) = (&scenario.inner, rules.inner);
    py.detach(|| harness::run_trials(s, r, trials, seed))
        .map(|inner| PyDistribution { inner })
        .map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (a, b, mode = "exact", tvd = 1e-9, p_value = 0.01))]
fn compare<'py>(
    py: Python<'py>,
    a: &PyDistribution,
    b: &PyDistribution,
    mode: &str,
    tvd: f64,
    p_value: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "exact" => CompareMode::Exact,
        "mc" => CompareMode::Mc,
        other => return Err(value_error(format!("unknown mode '{other}'"))),
    };
    let th = Thresholds { tvd, p_value };
    let v = harness::compare_with(&a.inner, &b.inner, mode, &th).map_err(value_error)?;
    to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (rules, seed = 0))]
fn run_nondemolition<'py>(py: Python<'py>, rules: &PyRuleSet, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let record = nondemolition::run_nondemolition(&rules.inner, seed).map_err(value_error)?;
    to_py(py, &record)
}

#[pyfunction]
#[pyo3(signature = (register_size = 5, correlation_sum = 0))]
fn nondemolition_stages<'py>(
    py: Python<'py>,
    register_size: usize,
    correlation_sum: i64,
) -> PyResult<Bound<'py, PyAny>> {
    let prep = DetectorPrep::ring(register_size, correlation_sum);
    let stages = nondemolition::stages(prep).map_err(value_error)?;
    to_py(py, &stages)
}

#[pyfunction]
#[pyo3(signature = (register_size = 5))]
fn eligibility<'py>(py: Python<'py>, register_size: usize) -> PyResult<Bound<'py, PyAny>> {
    let table = nondemolition::eligibility_table(DetectorPrep::ring(register_size, 0)).map_err(value_error)?;
    to_py(py, &table)
}

#[pymodule]
fn pyrulesim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRuleSet>()?;
    m.add_class::<PyDistribution>()?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(run_nondemolition, m)?)?;
    m.add_function(wrap_pyfunction!(nondemolition_stages, m)?)?;
    m.add_function(wrap_pyfunction!(eligibility, m)?)?;
    Ok(())
}
