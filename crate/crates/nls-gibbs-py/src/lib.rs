//! Python face of the library: model parameters, Fourier states, Gibbs
//! sampling, the Strang integrator, and the corrected-observable package.

use std::collections::HashMap;

use nlsg::dynamics::{self, IntegratorConfig};
use nlsg::gibbs;
use nlsg::normal_form::{self, DeltaRule, NormalFormPackage};
use nlsg::state::{self, FourierState};
use nlsg::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ModelParams")]
struct PyParams {
    inner: state::ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(q: usize, c: Vec<f64>, beta: f64, n: i32) -> PyResult<Self> {
        Ok(PyParams { inner: state::ModelParams::new(q, c, beta, n).map_err(value_err)? })
    }

    #[getter]
    fn n(&self) -> i32 {
        self.inner.truncation()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().to_vec()
    }

    #[getter]
    fn grid_len(&self) -> usize {
        self.inner.grid_len()
    }

    /// F(x), the defocusing potential applied to |psi|^2.
    fn potential(&self, x: f64) -> f64 {
        self.inner.potential(x)
    }

    fn interaction_density(&self, u: f64) -> f64 {
        self.inner.interaction_density(u)
    }

    fn rotation_rate(&self, u: f64) -> f64 {
        self.inner.rotation_rate(u)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(q={}, c={:?}, beta={}, n={})",
            self.inner.degree(),
            self.inner.coefficients(),
            self.inner.beta,
            self.inner.truncation()
        )
    }
}

#[pyclass(name = "FourierState")]
struct PyState {
    inner: FourierState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(n: i32) -> Self {
        PyState { inner: FourierState::zeros(n) }
    }

    #[staticmethod]
    fn from_modes(n: i32, modes: Vec<(i32, Complex64)>) -> PyResult<Self> {
        Ok(PyState { inner: FourierState::from_modes(n, &modes).map_err(value_err)? })
    }

    /// One draw from the quadratic reference measure at inverse temperature
    /// `params.beta`.
    #[staticmethod]
    fn gaussian(params: &PyParams, seed: u64) -> Self {
        let inner = gibbs::sample_gaussian(&params.inner, seed, 0, 1).pop().expect("one sample");
        PyState { inner }
    }

    #[getter]
    fn n(&self) -> i32 {
        self.inner.truncation()
    }

    fn mode(&self, k: i32) -> Complex64 {
        self.inner.mode(k)
    }

    fn with_mode(&self, k: i32, value: Complex64) -> PyResult<Self> {
        Ok(PyState { inner: self.inner.with_mode(k, value).map_err(value_err)? })
    }

    fn action(&self, k: i32) -> PyResult<f64> {
        state::action(&self.inner, k).map_err(value_err)
    }

    fn l2_norm_sq(&self) -> f64 {
        dynamics::l2_norm_sq(&self.inner)
    }

    fn momentum(&self) -> f64 {
        dynamics::momentum(&self.inner)
    }

    fn hs_norm(&self, s: f64) -> f64 {
        state::hs_norm(&self.inner, s)
    }

    fn energy(&self, params: &PyParams) -> f64 {
        state::conserved_energy(&self.inner, &params.inner)
    }

    fn interaction_energy(&self, params: &PyParams) -> f64 {
        state::interaction_energy(&self.inner, &params.inner)
    }

    #[pyo3(signature = (beta_hint=None))]
    fn to_json(&self, beta_hint: Option<f64>) -> String {
        state::state_to_json(&self.inner, beta_hint)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<(Self, Option<f64>)> {
        let (inner, hint) = state::state_from_json(text).map_err(value_err)?;
        Ok((PyState { inner }, hint))
    }

    fn __repr__(&self) -> String {
        format!(
            "FourierState(n={}, l2={:.6})",
            self.inner.truncation(),
            dynamics::l2_norm_sq(&self.inner)
        )
    }
}

#[pyclass(name = "NormalFormPackage")]
struct PyPackage {
    inner: NormalFormPackage,
}

#[pymethods]
impl PyPackage {
    /// Builds the sixth-order corrected observable for target mode `tk`.
    /// `delta` overrides the default cutoff width rule beta^(-13/10).
    #[staticmethod]
    #[pyo3(signature = (params, tk, delta=None))]
    fn build(params: &PyParams, tk: i32, delta: Option<f64>) -> PyResult<Self> {
        let rule = match delta {
            Some(d) => DeltaRule::Fixed(d),
            None => DeltaRule::Auto,
        };
        Ok(PyPackage { inner: normal_form::build(&params.inner, tk, rule).map_err(value_err)? })
    }

    #[getter]
    fn tk(&self) -> i32 {
        self.inner.base.tk
    }

    #[getter]
    fn n(&self) -> i32 {
        self.inner.truncation()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.base.params.beta
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.cutoff.delta()
    }

    fn evaluate(&self, state: &PyState) -> f64 {
        self.inner.evaluate(&state.inner)
    }

    fn time_derivative(&self, state: &PyState) -> f64 {
        self.inner.time_derivative(&state.inner)
    }

    fn action_rate(&self, state: &PyState) -> f64 {
        self.inner.action_rate(&state.inner)
    }

    fn remainder_value(&self, state: &PyState) -> f64 {
        self.inner.remainder_value(&state.inner)
    }

    fn term_counts(&self) -> HashMap<String, usize> {
        let b = &self.inner.base;
        HashMap::from([
            ("phi2".into(), b.phi_k2.len()),
            ("phi4".into(), b.phi_k4.len()),
            ("phi6".into(), b.phi_k6.len()),
            ("resonant_solution".into(), self.inner.tilde_phi6.len()),
            ("commutator_correction".into(), self.inner.correction.len()),
            ("total".into(), self.inner.phi6_total.len()),
        ])
    }

    /// Runs the coefficient-level and sampled identity checks; returns the
    /// overall verdict and each check's measured residual.
    fn verify(&self, samples: usize, seed: u64) -> PyResult<(bool, HashMap<String, f64>)> {
        let report = normal_form::verify_identities(&self.inner, samples, seed).map_err(value_err)?;
        let values = report.checks.iter().map(|c| (c.name.clone(), c.value)).collect();
        Ok((report.pass, values))
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(value_err)?;
        Ok(PyPackage { inner: NormalFormPackage::from_json(&v).map_err(value_err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "NormalFormPackage(n={}, tk={}, beta={}, terms={})",
            self.inner.truncation(),
            self.inner.base.tk,
            self.inner.base.params.beta,
            self.inner.phi6_total.len()
        )
    }
}

#[pyfunction]
fn sample_gaussian(params: &PyParams, seed: u64, count: usize) -> Vec<PyState> {
    gibbs::sample_gaussian(&params.inner, seed, 0, count)
        .into_iter()
        .map(|inner| PyState { inner })
        .collect()
}

/// Importance-weighted draws targeting the full measure: pairs of a state
/// and its log weight -beta*P(state).
#[pyfunction]
fn sample_gibbs(params: &PyParams, seed: u64, count: usize) -> PyResult<Vec<(PyState, f64)>> {
    let config = gibbs::SamplerConfig {
        params: params.inner.clone(),
        seed,
        method: gibbs::SampleMethod::ImportanceWeights,
        n_samples: count,
    };
    Ok(gibbs::sample(&config)
        .map_err(value_err)?
        .into_iter()
        .map(|ws| (PyState { inner: ws.state }, ws.log_weight))
        .collect())
}

/// Monte Carlo estimate of the partition-function ratio Z/Z_g as
/// (mean, stderr, ess).
#[pyfunction]
fn partition_ratio(params: &PyParams, seed: u64, count: usize) -> PyResult<(f64, f64, f64)> {
    let config = gibbs::SamplerConfig {
        params: params.inner.clone(),
        seed,
        method: gibbs::SampleMethod::ImportanceWeights,
        n_samples: count,
    };
    let samples = gibbs::sample(&config).map_err(value_err)?;
    let est = gibbs::mean_weight(&samples).map_err(value_err)?;
    Ok((est.mean, est.stderr, est.ess))
}

#[pyfunction]
fn evolve(state: &PyState, params: &PyParams, dt: f64, t_end: f64) -> PyResult<PyState> {
    let config = IntegratorConfig::new(dt, t_end, usize::MAX);
    let traj = dynamics::evolve(&state.inner, &params.inner, &config).map_err(value_err)?;
    Ok(PyState { inner: traj.last().clone() })
}

#[pyfunction]
fn conservation_check(
    state: &PyState,
    params: &PyParams,
    dt: f64,
    t_end: f64,
    observe_every: usize,
) -> PyResult<HashMap<String, f64>> {
    let config = IntegratorConfig::new(dt, t_end, observe_every);
    let traj = dynamics::evolve(&state.inner, &params.inner, &config).map_err(value_err)?;
    let report = dynamics::conservation_report(&traj, &params.inner);
    Ok(HashMap::from([
        ("h_initial".into(), report.h_initial),
        ("h_drift_rel".into(), report.h_drift_rel),
        ("l2_initial".into(), report.l2_initial),
        ("l2_drift_rel".into(), report.l2_drift_rel),
        ("momentum_drift_abs".into(), report.momentum_drift_abs),
    ]))
}

#[pyfunction]
fn plane_wave_frequency(params: &PyParams, k: i32, amplitude: f64) -> f64 {
    dynamics::plane_wave_frequency(&params.inner, k, amplitude)
}

#[pyfunction]
fn gaussian_mode_variance(params: &PyParams, k: i32) -> f64 {
    gibbs::gaussian_mode_variance(&params.inner, k)
}

#[pymodule]
fn nls_gibbs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyPackage>()?;
    m.add_function(wrap_pyfunction!(sample_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gibbs, m)?)?;
    m.add_function(wrap_pyfunction!(partition_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(conservation_check, m)?)?;
    m.add_function(wrap_pyfunction!(plane_wave_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_mode_variance, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
