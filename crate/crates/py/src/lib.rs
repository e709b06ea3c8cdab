//! Python module `mista`.
//!
//! Structured results (regime analyses, optima, bounds, exact solves) come
//! back as plain dicts and lists; parameters and simulation metrics are
//! classes.

use mista_core::analytic;
use mista_core::optimizer::{self, PolicyKind, RegimeFilter};
use mista_core::sim::{self, InitialState, RunConfig};
use mista_core::{oracle, protocol, Error, Policy, ScaledParams};
use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        Error::Overflow(_) => PyOverflowError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn parse_policy(name: &str, minislots: usize, tau1: f64, tau2: f64) -> PyResult<Policy> {
    match name {
        "sa" => Ok(Policy::SlottedAloha),
        "ta" => Ok(Policy::ThresholdAloha),
        "mista" => Ok(Policy::Mista),
        "mumista" => Ok(Policy::mumista_default(minislots, tau1, tau2)),
        other => Err(PyValueError::new_err(format!(
            "unknown policy {other:?}; expected sa, ta, mista or mumista"
        ))),
    }
}

/// Network and protocol parameters.
#[pyclass(name = "PolicyParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyPolicyParams {
    inner: protocol::PolicyParams,
}

#[pymethods]
impl PyPolicyParams {
    #[new]
    #[pyo3(signature = (n, gamma, tau1, tau2 = 1.0, policy = "mista", minislots = 32))]
    fn new(n: usize, gamma: u32, tau1: f64, tau2: f64, policy: &str, minislots: usize) -> PyResult<Self> {
        let policy = parse_policy(policy, minislots, tau1, tau2)?;
        let inner = protocol::PolicyParams::new(n, gamma, tau1, tau2, policy).map_err(to_py_err)?;
        Ok(PyPolicyParams { inner })
    }

    /// Builds parameters from `alpha = n tau1` and `r = gamma / n`.
    #[staticmethod]
    #[pyo3(signature = (n, alpha, r, tau2 = 1.0, policy = "mista", minislots = 32))]
    fn from_scaled(n: usize, alpha: f64, r: f64, tau2: f64, policy: &str, minislots: usize) -> PyResult<Self> {
        let scaled = ScaledParams::new(alpha, r, tau2).map_err(to_py_err)?;
        let policy = parse_policy(policy, minislots, alpha / n.max(1) as f64, tau2)?;
        let inner = scaled.to_params(n, policy).map_err(to_py_err)?;
        Ok(PyPolicyParams { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn gamma(&self) -> u32 {
        self.inner.gamma
    }

    #[getter]
    fn tau1(&self) -> f64 {
        self.inner.tau1
    }

    #[getter]
    fn tau2(&self) -> f64 {
        self.inner.tau2
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.inner.policy.name()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "PolicyParams(n={}, gamma={}, tau1={}, tau2={}, policy={:?})",
            p.n,
            p.gamma,
            p.tau1,
            p.tau2,
            p.policy.name()
        )
    }
}

/// Statistics of one simulation run.
#[pyclass(name = "RunMetrics", frozen)]
struct PyRunMetrics {
    inner: sim::RunMetrics,
}

#[pymethods]
impl PyRunMetrics {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn measured_slots(&self) -> u64 {
        self.inner.measured_slots
    }

    #[getter]
    fn throughput(&self) -> f64 {
        self.inner.throughput
    }

    #[getter]
    fn network_avg_aoi(&self) -> f64 {
        self.inner.network_avg_aoi
    }

    #[getter]
    fn normalized_aoi(&self) -> f64 {
        self.inner.normalized_aoi()
    }

    #[getter]
    fn successes(&self) -> u64 {
        self.inner.successes
    }

    #[getter]
    fn avg_aoi_per_source(&self) -> Vec<f64> {
        self.inner.avg_aoi_per_source.clone()
    }

    #[getter]
    fn active_count_histogram(&self) -> Vec<f64> {
        self.inner.active_count_histogram.clone()
    }

    /// `(slot, k, mean_age)` samples.
    #[getter]
    fn k_trajectory(&self) -> Vec<(u64, f64, f64)> {
        self.inner.k_trajectory.iter().map(|p| (p.slot, p.k, p.mean_age)).collect()
    }

    #[getter]
    fn pivot_age_correlation(&self) -> f64 {
        self.inner.pivot_age_correlation
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RunMetrics(n={}, throughput={:.6}, normalized_aoi={:.6})",
            self.inner.n,
            self.inner.throughput,
            self.inner.normalized_aoi()
        )
    }
}

fn run_config(params: &PyPolicyParams, slots: u64, seed: u64, warmup: Option<u64>, initial: &str) -> PyResult<RunConfig> {
    let mut config = RunConfig::new(params.inner.clone(), slots, seed);
    if let Some(w) = warmup {
        config = config.with_warmup(w);
    }
    let initial = match initial {
        "threshold" => InitialState::AllThreshold,
        "fresh" => InitialState::AllFresh,
        other => return Err(PyValueError::new_err(format!("unknown initial state {other:?}"))),
    };
    Ok(config.with_initial(initial))
}

/// Runs one seeded replication.
#[pyfunction]
#[pyo3(signature = (params, slots, seed = 0, warmup = None, initial = "threshold"))]
fn simulate(
    py: Python<'_>,
    params: &PyPolicyParams,
    slots: u64,
    seed: u64,
    warmup: Option<u64>,
    initial: &str,
) -> PyResult<PyRunMetrics> {
    let config = run_config(params, slots, seed, warmup, initial)?;
    let inner = py.detach(|| sim::run(&config)).map_err(to_py_err)?;
    Ok(PyRunMetrics { inner })
}

/// Runs `replications` seeds in parallel and returns the per-run metrics
/// with mean/std summaries.
#[pyfunction]
#[pyo3(signature = (params, slots, replications, seed = 0, warmup = None, initial = "threshold"))]
fn simulate_replicated<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    slots: u64,
    replications: usize,
    seed: u64,
    warmup: Option<u64>,
    initial: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let config = run_config(params, slots, seed, warmup, initial)?.with_replications(replications);
    let r = py.detach(|| sim::run_replicated(&config)).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("throughput", to_py(py, &r.throughput)?)?;
    out.set_item("network_avg_aoi", to_py(py, &r.network_avg_aoi)?)?;
    out.set_item("normalized_aoi", to_py(py, &r.normalized_aoi)?)?;
    let runs: Vec<PyRunMetrics> = r.replications.into_iter().map(|inner| PyRunMetrics { inner }).collect();
    out.set_item("runs", runs)?;
    Ok(out)
}

/// Per-slot success probability with `m` active sources.
#[pyfunction]
fn success_probability(m: u64, tau1: f64, tau2: f64) -> f64 {
    protocol::success_probability(m, tau1, tau2)
}

/// Stationary distribution of the active count: `(support_min, probabilities)`.
#[pyfunction]
fn active_count_pmf(params: &PyPolicyParams) -> PyResult<(usize, Vec<f64>)> {
    let p = analytic::active_count_pmf(&params.inner).map_err(to_py_err)?;
    Ok((p.support_min, p.probabilities))
}

/// `P_m / P_{m-1}`.
#[pyfunction]
fn pm_ratio(params: &PyPolicyParams, m: usize) -> PyResult<f64> {
    analytic::pm_ratio(m, &params.inner).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (k, alpha, r, tau2 = 1.0))]
fn drift_f(k: f64, alpha: f64, r: f64, tau2: f64) -> PyResult<f64> {
    let s = ScaledParams::new(alpha, r, tau2).map_err(to_py_err)?;
    analytic::drift_f(k, &s).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (alpha, r, tau2 = 1.0))]
fn regime_analysis<'py>(py: Python<'py>, alpha: f64, r: f64, tau2: f64) -> PyResult<Bound<'py, PyAny>> {
    let s = ScaledParams::new(alpha, r, tau2).map_err(to_py_err)?;
    to_py(py, &analytic::regime_analysis(&s).map_err(to_py_err)?)
}

/// Asymptotic normalised age and throughput at the selected root, or at
/// `k0` when given.
#[pyfunction]
#[pyo3(signature = (alpha, r, tau2 = 1.0, k0 = None))]
fn asymptotic_age<'py>(py: Python<'py>, alpha: f64, r: f64, tau2: f64, k0: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let s = ScaledParams::new(alpha, r, tau2).map_err(to_py_err)?;
    let (k0, regime) = match k0 {
        Some(k) => (k, None),
        None => {
            let a = analytic::regime_analysis(&s).map_err(to_py_err)?;
            (a.selected_k0, Some(a.regime))
        }
    };
    let out = PyDict::new(py);
    out.set_item("k0", k0)?;
    out.set_item("regime", to_py(py, &regime)?)?;
    out.set_item("age_over_n", analytic::asymptotic_age(&s, k0))?;
    out.set_item("age_over_n_from_root", analytic::asymptotic_age_from_root(&s, k0))?;
    out.set_item("throughput", analytic::throughput_asymptotic(&s, k0))?;
    out.set_item("q0_limit", analytic::q0_limit(&s, k0))?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (tau2 = None))]
fn max_throughput_and_age_bound<'py>(py: Python<'py>, tau2: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let b = match tau2 {
        Some(t) => analytic::max_throughput_with_tau2(t).map_err(to_py_err)?,
        None => analytic::max_throughput_and_age_bound(),
    };
    let out = PyDict::new(py);
    out.set_item("q_max", b.q_max)?;
    out.set_item("G", b.g_star)?;
    out.set_item("tau2", b.tau2_star)?;
    out.set_item("bound_slope", b.bound_slope())?;
    Ok(out)
}

#[pyfunction]
fn spectral_ratio(theta2: f64, theta1: f64, c_bits: f64, d_bits: f64) -> PyResult<f64> {
    analytic::spectral_ratio(theta2, theta1, c_bits, d_bits).map_err(to_py_err)
}

/// Payload-to-minislot ratio `c / d` at which the spectral ratio equals 1.
#[pyfunction]
fn breakeven_payload_ratio(theta2: f64, theta1: f64) -> PyResult<Option<f64>> {
    analytic::breakeven_payload_ratio(theta2, theta1).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (policy = "mista", regime = "any"))]
fn optimize_age<'py>(py: Python<'py>, policy: &str, regime: &str) -> PyResult<Bound<'py, PyAny>> {
    let policy = match policy {
        "mista" => PolicyKind::Mista,
        "ta" => PolicyKind::ThresholdAloha,
        "sa" => PolicyKind::SlottedAloha,
        other => return Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    };
    let filter = match regime {
        "sp" => RegimeFilter::SinglePeak,
        "dp" => RegimeFilter::DoublePeak,
        "any" => RegimeFilter::Any,
        other => return Err(PyValueError::new_err(format!("unknown regime {other:?}"))),
    };
    let o = py.detach(|| optimizer::optimize_age(policy, filter)).map_err(to_py_err)?;
    to_py(py, &o)
}

/// Exact stationary solve of a small network.
#[pyfunction]
fn exact_stationary<'py>(py: Python<'py>, params: &PyPolicyParams) -> PyResult<Bound<'py, PyDict>> {
    let e = py.detach(|| oracle::exact_stationary(&params.inner)).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("pm", e.pm.clone())?;
    out.set_item("residual", e.residual)?;
    out.set_item("max_row_sum_error", e.max_row_sum_error)?;
    let types = PyList::empty(py);
    for (i, t) in e.types.iter().enumerate() {
        types.append((t.m, t.passive_ages.clone(), e.type_probabilities[i], e.multiplicities[i] as u64))?;
    }
    out.set_item("types", types)?;
    Ok(out)
}

#[pymodule]
fn mista(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicyParams>()?;
    m.add_class::<PyRunMetrics>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_replicated, m)?)?;
    m.add_function(wrap_pyfunction!(success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(active_count_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(pm_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(drift_f, m)?)?;
    m.add_function(wrap_pyfunction!(regime_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_age, m)?)?;
    m.add_function(wrap_pyfunction!(max_throughput_and_age_bound, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(breakeven_payload_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_age, m)?)?;
    m.add_function(wrap_pyfunction!(exact_stationary, m)?)?;
    Ok(())
}
