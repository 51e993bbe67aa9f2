//! Python bindings. Reports come back as plain dicts; values that are not
//! finite (an infinite optimal ridge, a vacuous bound) appear as `None`.

use overfit_core::bounds::{bounds_report, classify, default_k_grid};
use overfit_core::mc::McConfig;
use overfit_core::polyregime::{poly_regime_report, BlockKernelSpec, PolyTarget};
use overfit_core::schema::{parse_spectrum_str, parse_target_str};
use overfit_core::{kappa, risk, tuning, Error, Spectrum, Target};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(
    overfit_lab,
    OverfitError,
    PyValueError,
    "Invalid input to an overfit_lab routine."
);
create_exception!(
    overfit_lab,
    DegenerateError,
    OverfitError,
    "A well-posed problem for which the requested quantity does not exist."
);

fn py_err(e: Error) -> PyErr {
    if e.is_degenerate() {
        DegenerateError::new_err(e.to_string())
    } else {
        OverfitError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| OverfitError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum {
    inner: Spectrum,
}

#[pymethods]
impl PySpectrum {
    /// Parse a JSON spectrum document such as `{"family": "power_law", "alpha": 2}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_spectrum_str(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn explicit(eigenvalues: Vec<f64>) -> PyResult<Self> {
        Spectrum::explicit(eigenvalues)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn power_law(alpha: f64) -> PyResult<Self> {
        Spectrum::power_law(alpha)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn log_power(alpha: f64) -> PyResult<Self> {
        Spectrum::log_power(alpha)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn exponential() -> PyResult<Self> {
        Spectrum::exponential()
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn isotropic(d: u64) -> PyResult<Self> {
        Spectrum::isotropic(d)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn junk(d_s: u64, d_j: u64) -> PyResult<Self> {
        Spectrum::junk(d_s, d_j)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn blocks(blocks: Vec<(f64, u64)>) -> PyResult<Self> {
        Spectrum::blocks(blocks)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    /// `λ_i`, 1-based.
    fn eigenvalue(&self, i: u64) -> f64 {
        self.inner.eigenvalue(i)
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn effective_ranks<'py>(&self, py: Python<'py>, k: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.effective_ranks(k).map_err(py_err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum({})",
            serde_json::to_string(self.inner.family()).unwrap_or_default()
        )
    }
}

#[pyclass(name = "Target", frozen)]
struct PyTarget {
    inner: Target,
}

#[pymethods]
impl PyTarget {
    #[new]
    #[pyo3(signature = (coeffs, sigma2=0.0))]
    fn new(coeffs: Vec<f64>, sigma2: f64) -> PyResult<Self> {
        Target::new(coeffs, sigma2)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn zero(sigma2: f64) -> PyResult<Self> {
        Target::zero(sigma2)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    /// `v_i = i^{-power/2}` for `i ≤ count`.
    #[staticmethod]
    fn power_family(power: f64, count: usize, sigma2: f64) -> PyResult<Self> {
        Target::power_family(power, count, sigma2)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_target_str(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2()
    }
}

#[pyfunction]
#[pyo3(signature = (spectrum, n, delta=0.0))]
fn solve_kappa<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    n: u64,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &kappa::solve_kappa(&spectrum.inner, n, delta).map_err(py_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (spectrum, target, n, delta=0.0))]
fn risk_report<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    target: &PyTarget,
    n: u64,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &risk::risk_report(&spectrum.inner, &target.inner, n, delta).map_err(py_err)?,
    )
}

#[pyfunction]
fn tune_ridge<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    target: &PyTarget,
    n: u64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &tuning::tune_ridge(&spectrum.inner, &target.inner, n).map_err(py_err)?,
    )
}

#[pyfunction]
fn cost_of_overfitting<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    target: &PyTarget,
    n: u64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &tuning::cost_of_overfitting(&spectrum.inner, &target.inner, n).map_err(py_err)?,
    )
}

#[pyfunction]
fn bounds<'py>(py: Python<'py>, spectrum: &PySpectrum, n: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bounds_report(&spectrum.inner, n).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (spectrum, k_grid=None))]
fn taxonomy<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    k_grid: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = k_grid.unwrap_or_else(default_k_grid);
    to_py(py, &classify(&spectrum.inner, &grid).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (d, mu, n, degree_energy=Vec::new(), sigma2=1.0))]
fn poly_regime<'py>(
    py: Python<'py>,
    d: u64,
    mu: Vec<f64>,
    n: u64,
    degree_energy: Vec<f64>,
    sigma2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = BlockKernelSpec::new(d, mu).map_err(py_err)?;
    let target = PolyTarget::new(degree_energy, sigma2).map_err(py_err)?;
    to_py(py, &poly_regime_report(&spec, &target, n).map_err(py_err)?)
}

/// Monte Carlo check; releases the interpreter lock while trials run.
#[pyfunction]
#[pyo3(signature = (spectrum, target, n, deltas, trials=500, seed=0, features=None))]
#[allow(clippy::too_many_arguments)]
fn validate<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    target: &PyTarget,
    n: u64,
    deltas: Vec<f64>,
    trials: usize,
    seed: u64,
    features: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = McConfig {
        spectrum: spectrum.inner.clone(),
        target: target.inner.clone(),
        n,
        deltas,
        trials,
        seed,
        features,
        threads: None,
    };
    let report = py
        .detach(|| overfit_core::mc::validate(&config))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn overfit_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyTarget>()?;
    m.add("OverfitError", m.py().get_type::<OverfitError>())?;
    m.add("DegenerateError", m.py().get_type::<DegenerateError>())?;
    m.add_function(wrap_pyfunction!(solve_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(risk_report, m)?)?;
    m.add_function(wrap_pyfunction!(tune_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(cost_of_overfitting, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(taxonomy, m)?)?;
    m.add_function(wrap_pyfunction!(poly_regime, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
