//! Python bindings: codebooks, bound evaluators, exact mixture quantities and
//! config-driven experiments. Structured results come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use capwall_core::bounds::{self, BookParams, CeilingInputs, FloorInputs};
use capwall_core::channel::CascadeChannel;
use capwall_core::codebook::{self, lattice};
use capwall_core::experiment::{self, ExperimentConfig};
use capwall_core::learner::bayes_optimal_decoder;
use capwall_core::probcore::{Dist, Kernel};
use capwall_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ResourceLimit(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| py_err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated-on-demand Delta-separable codebook.
#[pyclass(name = "Codebook", module = "capwall", frozen)]
struct PyCodebook {
    inner: codebook::Codebook,
}

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    #[pyo3(signature = (m))]
    fn classification(m: usize) -> PyResult<Self> {
        Ok(Self { inner: codebook::build_classification(m).map_err(py_err)? })
    }

    #[staticmethod]
    fn ranking(n: usize) -> PyResult<Self> {
        Ok(Self { inner: codebook::build_ranking(n).map_err(py_err)? })
    }

    /// Greedy packing of a `side^dims` lattice at separation `r`, truncation `tau`.
    #[staticmethod]
    #[pyo3(signature = (dims, side, r, tau, spacing = 1.0))]
    fn mse(dims: usize, side: usize, r: f64, tau: f64, spacing: f64) -> PyResult<Self> {
        let points = lattice(dims, side, spacing);
        Ok(Self { inner: codebook::build_mse_packing(points, r, tau).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| py_err(e.into()))?;
        Ok(Self { inner })
    }

    #[getter(M)]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn with_margins(&self, epsilon: f64, delta: f64) -> Self {
        Self { inner: self.inner.with_margins(epsilon, delta) }
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &codebook::validate(&self.inner))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Codebook(kind={}, M={}, delta={}, epsilon={})",
            self.inner.loss_kind().name(),
            self.inner.m(),
            self.inner.delta(),
            self.inner.epsilon()
        )
    }
}

/// An experiment config; `run` and `verify` return the JSON records as dicts.
#[pyclass(name = "Experiment", module = "capwall", frozen)]
struct PyExperiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { cfg: ExperimentConfig::from_json(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { cfg: ExperimentConfig::load(&path).map_err(py_err)? })
    }

    fn grid<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.cfg.grid())
    }

    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = py.detach(|| experiment::run(&self.cfg));
        to_py(py, &out)
    }

    fn run_csv(&self, py: Python<'_>) -> String {
        py.detach(|| experiment::to_csv(&experiment::run(&self.cfg)))
    }

    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| experiment::verify(&self.cfg)).map_err(py_err)?;
        to_py(py, &report)
    }
}

#[pyfunction]
#[pyo3(signature = (m, delta, epsilon, info))]
fn fano_floor(m: usize, delta: f64, epsilon: f64, info: f64) -> PyResult<f64> {
    let f = FloorInputs::new(m, delta, epsilon, info).map_err(py_err)?;
    bounds::fano_floor(&f).map_err(py_err)
}

/// `books` is a list of `(M, delta, epsilon)` tuples.
#[pyfunction]
fn information_wall<'py>(py: Python<'py>, capacity: f64, books: Vec<(usize, f64, f64)>) -> PyResult<Bound<'py, PyAny>> {
    let books: Vec<BookParams> =
        books.into_iter().map(|(m, delta, epsilon)| BookParams { m, delta, epsilon }).collect();
    to_py(py, &bounds::information_wall(capacity, &books).map_err(py_err)?)
}

#[pyfunction]
fn pacbayes_ceiling(emp_risk: f64, kl: f64, m: usize, delta_conf: f64) -> PyResult<f64> {
    bounds::pacbayes_ceiling(&CeilingInputs { emp_risk, kl, m, delta_conf }).map_err(py_err)
}

#[pyfunction]
fn lifted_ceiling(emp_risk: f64, budget: f64, m: usize, delta_conf: f64, eta: f64) -> PyResult<f64> {
    bounds::lifted_ceiling(emp_risk, budget, m, delta_conf, eta).map_err(py_err)
}

#[pyfunction]
fn kl_budget<'py>(
    py: Python<'py>,
    m: usize,
    cbar: f64,
    ius: f64,
    rho: f64,
    klprior: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bounds::kl_budget(m, cbar, ius, rho, klprior).map_err(py_err)?)
}

#[pyfunction]
fn markov_lift(expected_kl: f64, eta: f64) -> PyResult<f64> {
    bounds::markov_lift(expected_kl, eta).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (r, m, delta, epsilon))]
fn required_capacity<'py>(py: Python<'py>, r: f64, m: usize, delta: f64, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bounds::required_capacity(r, m, delta, epsilon).map_err(py_err)?)
}

/// Exact information, floor and Bayes risk of a codebook mixture behind a
/// symmetric-noise cascade shared by every context.
#[pyfunction]
#[pyo3(signature = (book, cog_noise, art_noise = 0.0, context_law = None))]
fn mixture_report<'py>(
    py: Python<'py>,
    book: &PyCodebook,
    cog_noise: f64,
    art_noise: f64,
    context_law: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let law = Dist::new(context_law.unwrap_or_else(|| vec![1.0])).map_err(py_err)?;
    let m = book.inner.m();
    let contexts = law.alphabet_size();
    let mix = codebook::mixture(book.inner.clone(), law).map_err(py_err)?;
    let cascade = CascadeChannel::uniform_over_contexts(
        Kernel::symmetric(m, cog_noise).map_err(py_err)?,
        Kernel::symmetric(m, art_noise).map_err(py_err)?,
        contexts,
    )
    .map_err(py_err)?;
    let info = mix.info(&cascade).map_err(py_err)?;
    let floor = mix.exact_floor(&cascade).map_err(py_err)?;
    let bayes = bayes_optimal_decoder(&mix, &cascade).map_err(py_err)?;
    let report = serde_json::json!({
        "M": m,
        "info": info,
        "floor": floor,
        "bayes_risk": bayes.risk,
        "index_error": bayes.index_error,
        "decoder": bayes.decoder,
    });
    to_py(py, &report)
}

#[pymodule(name = "capwall")]
fn capwall_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(fano_floor, m)?)?;
    m.add_function(wrap_pyfunction!(information_wall, m)?)?;
    m.add_function(wrap_pyfunction!(pacbayes_ceiling, m)?)?;
    m.add_function(wrap_pyfunction!(lifted_ceiling, m)?)?;
    m.add_function(wrap_pyfunction!(kl_budget, m)?)?;
    m.add_function(wrap_pyfunction!(markov_lift, m)?)?;
    m.add_function(wrap_pyfunction!(required_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_report, m)?)?;
    m.add("EXIT_INVARIANT", experiment::exit::INVARIANT)?;
    Ok(())
}
