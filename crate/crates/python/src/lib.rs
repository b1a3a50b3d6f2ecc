//! Python bindings: parameters, angles, spectra, transit maps and the two
//! protocols.

use num_complex::Complex64 as C64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use twoatom_cqed::analysis::{self, Regime};
use twoatom_cqed::dynamics::PropagationConfig;
use twoatom_cqed::error::Error;
use twoatom_cqed::model::{self, ManifoldBasis};
use twoatom_cqed::{protocols, spectrum};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Parameters of one cavity transit; rates in units of `1/sigma`.
#[pyclass(name = "SystemParams", from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    inner: model::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (g0=28.3929, epsilon=1.0, sigma=1.0, delta=1.0, detuning=0.0, gamma=0.0, n_max=3, window=12.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(g0: f64, epsilon: f64, sigma: f64, delta: f64, detuning: f64, gamma: f64, n_max: u32, window: f64) -> PyResult<Self> {
        let inner = model::SystemParams {
            g0,
            epsilon,
            sigma,
            delta,
            detuning,
            gamma,
            n_max,
            t_span: (-window, window),
        };
        inner.validate().map_err(py_err)?;
        Ok(PySystemParams { inner })
    }

    #[getter]
    fn g0(&self) -> f64 {
        self.inner.g0
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn detuning(&self) -> f64 {
        self.inner.detuning
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn n_max(&self) -> u32 {
        self.inner.n_max
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "SystemParams(g0={}, epsilon={}, sigma={}, delta={}, detuning={}, gamma={}, n_max={}, window={})",
            p.g0, p.epsilon, p.sigma, p.delta, p.detuning, p.gamma, p.n_max, p.t_span.1
        )
    }
}

fn config(p: &model::SystemParams) -> PropagationConfig {
    PropagationConfig::for_sigma(p.sigma)
}

#[pyfunction]
fn phi_angle(n: i64, params: &PySystemParams) -> PyResult<f64> {
    spectrum::phi_angle(n, &params.inner).map_err(py_err)
}

#[pyfunction]
fn theta_angle(n: i64, params: &PySystemParams) -> PyResult<f64> {
    spectrum::theta_angle(n, &params.inner).map_err(py_err)
}

#[pyfunction]
fn theta_big(params: &PySystemParams) -> PyResult<f64> {
    spectrum::theta_big(&params.inner).map_err(py_err)
}

#[pyfunction]
fn crossing_time(params: &PySystemParams) -> PyResult<f64> {
    spectrum::crossing_time(&params.inner).map_err(py_err)
}

/// Closed-form `(E1, E2, E3, E4)` at time `t`.
#[pyfunction]
fn closed_form_energies(t: f64, params: &PySystemParams, n: i64) -> PyResult<[f64; 4]> {
    spectrum::closed_form_energies(t, &params.inner, n).map_err(py_err)
}

/// Ascending eigenvalues of block `n` at time `t`.
#[pyfunction]
fn eigenvalues(t: f64, params: &PySystemParams, n: i64) -> PyResult<Vec<f64>> {
    if n < -2 {
        return Err(PyValueError::new_err("block index must be at least -2"));
    }
    Ok(spectrum::diagonalize(t, &params.inner, ManifoldBasis { n }).energies)
}

/// Transit map of the block with `n_exc` excitations, as rows of complex
/// numbers, plus the basis labels.
#[pyfunction]
fn scatter_matrix(params: &PySystemParams, n_exc: i64) -> PyResult<(Vec<String>, Vec<Vec<C64>>)> {
    let s = analysis::scatter_matrix(&params.inner, n_exc, &config(&params.inner)).map_err(py_err)?;
    let labels = s.basis.labels().iter().map(|l| l.to_string()).collect();
    let rows = (0..s.matrix.nrows())
        .map(|j| (0..s.matrix.ncols()).map(|i| s.matrix[(j, i)]).collect())
        .collect();
    Ok((labels, rows))
}

/// Residual of the simulated map of block `n` against the predicted form
/// for `regime`.
#[pyfunction]
fn input_output_residual(params: &PySystemParams, n: i64, regime: &str) -> PyResult<f64> {
    let regime: Regime = regime.parse().map_err(py_err)?;
    let s = analysis::scatter_matrix(&params.inner, n + 2, &config(&params.inner)).map_err(py_err)?;
    let angles = spectrum::MixingAngles::evaluate(n, &params.inner).map_err(py_err)?;
    analysis::check_input_output(&s, &angles, regime).map(|r| r.residual).map_err(py_err)
}

/// `(fidelity, success_probability)` of the entangling transit.
#[pyfunction]
fn entangle_atoms(params: &PySystemParams) -> PyResult<(f64, f64)> {
    let r = protocols::entangle_atoms(&params.inner, &config(&params.inner)).map_err(py_err)?;
    Ok((r.fidelity, r.success_probability))
}

#[pyfunction]
#[pyo3(signature = (target, n, params, floor=None))]
fn calibrate_coupling(target: f64, n: i64, params: &PySystemParams, floor: Option<f64>) -> PyResult<PySystemParams> {
    protocols::calibrate_coupling(target, n, &params.inner, floor)
        .map(|inner| PySystemParams { inner })
        .map_err(py_err)
}

/// Three-cavity transfer; returns `(fidelity, stage angles, warnings)`.
#[pyfunction]
#[pyo3(signature = (alpha, beta, params=None, stage2_g0=20.0, stage1_offset=0.0))]
fn teleport(
    alpha: C64,
    beta: C64,
    params: Option<PySystemParams>,
    stage2_g0: f64,
    stage1_offset: f64,
) -> PyResult<(f64, Vec<f64>, Vec<String>)> {
    let template = params.map(|p| p.inner).unwrap_or_default();
    let cfg = config(&template);
    let stages = protocols::teleport_stages(&template, stage2_g0, stage1_offset, &cfg).map_err(py_err)?;
    let r = protocols::teleport(alpha, beta, &stages, &cfg).map_err(py_err)?;
    Ok((r.fidelity, r.stages.iter().map(|s| s.phi).collect(), r.warnings))
}

#[pymodule]
fn twoatom_cqed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_function(wrap_pyfunction!(phi_angle, m)?)?;
    m.add_function(wrap_pyfunction!(theta_angle, m)?)?;
    m.add_function(wrap_pyfunction!(theta_big, m)?)?;
    m.add_function(wrap_pyfunction!(crossing_time, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_energies, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(scatter_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(input_output_residual, m)?)?;
    m.add_function(wrap_pyfunction!(entangle_atoms, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(teleport, m)?)?;
    Ok(())
}
