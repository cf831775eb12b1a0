//! Python bindings for the quantized-network toolkit. Rationals cross the
//! boundary as strings ("3/8" or "0.375") so exact values survive the trip.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use qnet::bounds::{self, BoundModel};
use qnet::json;
use qnet::rational::{parse_rat, Rat};
use qnet::synth::dependent::{build_dependent, plan_dependent, Strategy};
use qnet::synth::independent::{build_independent, plan_independent};
use qnet::verify::{run_property_suite, sup_error};
use qnet::{gadgets, QuantMode, QuantizedNetwork};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rat_arg(s: &str, what: &str) -> PyResult<Rat> {
    parse_rat(s).ok_or_else(|| PyValueError::new_err(format!("{what}: bad rational {s:?}")))
}

fn mode_arg(s: &str) -> PyResult<QuantMode> {
    match s {
        "nonlinear" => Ok(QuantMode::Nonlinear),
        "linear" => Ok(QuantMode::Linear),
        _ => Err(PyValueError::new_err("mode must be 'nonlinear' or 'linear'")),
    }
}

#[pyclass(name = "TargetFunction", from_py_object)]
#[derive(Clone)]
struct PyTarget {
    inner: qnet::TargetFunction,
}

#[pymethods]
impl PyTarget {
    /// Look up a registered target ("zero", "x_half", "x2_half",
    /// "abs_center", "xy_half", "pwl7:<seed>").
    #[staticmethod]
    fn by_name(name: &str) -> PyResult<Self> {
        qnet::TargetFunction::by_name(name)
            .map(|inner| PyTarget { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown target {name:?}")))
    }

    /// Seeded random Lipschitz-1 piecewise-linear function on [0,1].
    #[staticmethod]
    #[pyo3(signature = (seed, kinks = 7))]
    fn random_pwl(seed: u64, kinks: usize) -> Self {
        PyTarget {
            inner: qnet::TargetFunction::random_pwl(seed, kinks),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.d {
            return Err(PyValueError::new_err("point dimension mismatch"));
        }
        Ok(self.inner.eval_f64(&x))
    }

    /// Exact evaluation; coordinates and result are rational strings.
    fn eval_exact(&self, x: Vec<String>) -> PyResult<String> {
        let pt = parse_point(&x)?;
        if pt.len() != self.inner.d {
            return Err(PyValueError::new_err("point dimension mismatch"));
        }
        Ok(self.inner.eval_exact(&pt).to_string())
    }
}

fn parse_point(x: &[String]) -> PyResult<Vec<Rat>> {
    x.iter().map(|s| rat_arg(s, "coordinate")).collect()
}

#[pyclass(name = "Network")]
struct PyNetwork {
    inner: QuantizedNetwork,
}

#[pymethods]
impl PyNetwork {
    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_f64(&x).map_err(err)
    }

    fn eval_exact(&self, x: Vec<String>) -> PyResult<String> {
        let pt = parse_point(&x)?;
        Ok(self.inner.eval(&pt).map_err(err)?.to_string())
    }

    /// Structural violations, empty for a well-formed network.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(|v| format!("{v:?}")).collect()
    }

    fn complexity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let rep = self.inner.complexity();
        let d = PyDict::new(py);
        d.set_item("depth", rep.depth)?;
        d.set_item("max_width", rep.max_width)?;
        d.set_item("weight_count", rep.weight_count)?;
        d.set_item("memory_bits", rep.memory_bits)?;
        d.set_item("predicted", rep.predicted)?;
        Ok(d)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim
    }

    #[getter]
    fn codebook(&self) -> Vec<String> {
        self.inner
            .codebook
            .values()
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    fn to_json(&self) -> String {
        String::from_utf8(json::to_json(&self.inner)).unwrap()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = json::from_json(text.as_bytes()).map_err(err)?;
        Ok(PyNetwork { inner })
    }

    fn __repr__(&self) -> String {
        let rep = self.inner.complexity();
        format!(
            "Network(input_dim={}, depth={}, weights={}, bits={})",
            self.inner.input_dim, rep.depth, rep.weight_count, rep.memory_bits
        )
    }
}

/// Function-independent builder: local Taylor polynomials glued by a
/// trapezoid partition of unity.
#[pyfunction]
#[pyo3(signature = (target, eps, lam = 2, mode = "nonlinear", allow_large = false))]
fn synth_independent(
    target: &PyTarget,
    eps: &str,
    lam: u32,
    mode: &str,
    allow_large: bool,
) -> PyResult<PyNetwork> {
    let eps = rat_arg(eps, "eps")?;
    let plan = plan_independent(
        target.inner.d as u32,
        target.inner.n,
        &eps,
        lam,
        mode_arg(mode)?,
    )
    .map_err(err)?;
    let inner = build_independent(&target.inner, &plan, allow_large).map_err(err)?;
    Ok(PyNetwork { inner })
}

/// Function-dependent builder for Lipschitz-1 functions on [0,1]
/// (breakpoint interpolation, optionally with cached residuals).
#[pyfunction]
#[pyo3(signature = (target, eps, lam = 2, mode = "nonlinear", strategy = "cached"))]
fn synth_dependent(
    target: &PyTarget,
    eps: &str,
    lam: u32,
    mode: &str,
    strategy: &str,
) -> PyResult<PyNetwork> {
    let strategy = match strategy {
        "cached" => Strategy::Cached,
        "interpolation" => Strategy::InterpolationOnly,
        _ => {
            return Err(PyValueError::new_err(
                "strategy must be 'cached' or 'interpolation'",
            ))
        }
    };
    if target.inner.d != 1 || target.inner.n != 1 {
        return Err(PyValueError::new_err(
            "the function-dependent construction requires d = n = 1",
        ));
    }
    let eps = rat_arg(eps, "eps")?;
    let plan = plan_dependent(&eps, lam, mode_arg(mode)?, strategy).map_err(err)?;
    let inner = build_dependent(&target.inner, &plan).map_err(err)?;
    Ok(PyNetwork { inner })
}

/// Grid sup-error certificate for `net` against `target`.
#[pyfunction]
#[pyo3(signature = (net, target, spacing, eps, lipschitz = 2.0))]
fn certify<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    target: &PyTarget,
    spacing: &str,
    eps: f64,
    lipschitz: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spacing = rat_arg(spacing, "spacing")?;
    let cert = sup_error(&net.inner, &target.inner, &spacing, eps, lipschitz).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("grid_spacing", &cert.grid_spacing)?;
    d.set_item("measured_sup_error", cert.measured_sup_error)?;
    d.set_item("certified_sup_error", cert.certified_sup_error)?;
    d.set_item("target_epsilon", cert.target_epsilon)?;
    d.set_item("pass", cert.pass)?;
    Ok(d)
}

/// Piecewise-linear squaring gadget (error 2^-2(r+1) on [0,1]).
#[pyfunction]
fn build_squaring(r: u32) -> PyResult<PyNetwork> {
    Ok(PyNetwork {
        inner: gadgets::build_squaring(r).map_err(err)?,
    })
}

/// Approximate multiplier on [-1,1]^2 (error 6 * 2^-2(r+1)).
#[pyfunction]
fn build_multiplier(r: u32) -> PyResult<PyNetwork> {
    Ok(PyNetwork {
        inner: gadgets::build_multiplier(r).map_err(err)?,
    })
}

/// Bound-model optimal bit-width log2(lambda_opt).
#[pyfunction]
#[pyo3(signature = (d, n, eps, theta1 = 1.0))]
fn bitwidth_opt(d: u64, n: u64, eps: f64, theta1: f64) -> PyResult<f64> {
    bounds::bitwidth_opt(&BoundModel::new(d, n, eps, theta1)).map_err(err)
}

/// Memory-bound model M(lambda).
#[pyfunction]
#[pyo3(signature = (lam, d, n, eps, theta1 = 1.0))]
fn memory_bound(lam: f64, d: u64, n: u64, eps: f64, theta1: f64) -> PyResult<f64> {
    bounds::memory_bound(lam, &BoundModel::new(d, n, eps, theta1)).map_err(err)
}

/// Weight overhead of quantization vs the unquantized bounds.
#[pyfunction]
fn overhead<'py>(py: Python<'py>, d: u64, n: u64, eps: f64, lam: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = bounds::overhead_report(d, n, eps, lam).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("quantized_upper", r.quantized_upper)?;
    out.set_item("unquantized_upper", r.unquantized_upper)?;
    out.set_item("unquantized_lower", r.unquantized_lower)?;
    out.set_item("overhead_factor", r.overhead_factor)?;
    Ok(out)
}

/// Seeded property suite; returns the JSON report as a string.
#[pyfunction]
#[pyo3(signature = (seed = 0, cases = 100))]
fn run_suite(seed: u64, cases: u64) -> String {
    String::from_utf8(run_property_suite(seed, cases).to_json()).unwrap()
}

#[pymodule]
fn qnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTarget>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(synth_independent, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dependent, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(build_squaring, m)?)?;
    m.add_function(wrap_pyfunction!(build_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(bitwidth_opt, m)?)?;
    m.add_function(wrap_pyfunction!(memory_bound, m)?)?;
    m.add_function(wrap_pyfunction!(overhead, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
