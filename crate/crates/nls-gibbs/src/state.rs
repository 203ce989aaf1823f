//! Truncated Fourier phase space: state vectors, model parameters, norms,
//! interaction energy, and the energy gradient.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("mode {k} outside truncation |k| <= {n}")]
    InvalidMode { k: i32, n: i32 },
    #[error("duplicate mode {k} in state snapshot")]
    DuplicateMode { k: i32 },
    #[error("grid of {got} points insufficient for exact quadrature, need at least {required}")]
    GridResolution { required: usize, got: usize },
    #[error("state contains a non-finite coefficient at mode {k}")]
    NonFinite { k: i32 },
    #[error("malformed state snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("degree q must be at least 2, got {0}")]
    DegreeTooSmall(usize),
    #[error("expected {expected} coefficients c_2..c_q for degree {q}, got {got}")]
    CoefficientCount { q: usize, expected: usize, got: usize },
    #[error("leading coefficient c_2 must be nonzero")]
    ZeroLeading,
    #[error("potential is negative at intensity {x:.6e} (value {value:.6e}); defocusing requires F >= 0")]
    NotDefocusing { x: f64, value: f64 },
    #[error("inverse temperature must be positive, got {0}")]
    BadBeta(f64),
    #[error("truncation radius must be nonnegative, got {0}")]
    BadTruncation(i32),
}

/// Model parameters: the polynomial nonlinearity F(x) = Σ_{j=2}^{q} c_j x^j
/// (defocusing, so F ≥ 0 and c_2 ≠ 0), the inverse temperature β, and the
/// Galerkin truncation radius N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    q: usize,
    /// c[0] = c_2, c[1] = c_3, ...
    c: Vec<f64>,
    pub beta: f64,
    pub n: i32,
}

impl ModelParams {
    pub fn new(q: usize, c: Vec<f64>, beta: f64, n: i32) -> Result<Self, ParamsError> {
        if q < 2 {
            return Err(ParamsError::DegreeTooSmall(q));
        }
        if c.len() != q - 1 {
            return Err(ParamsError::CoefficientCount { q, expected: q - 1, got: c.len() });
        }
        if c[0] == 0.0 {
            return Err(ParamsError::ZeroLeading);
        }
        if beta <= 0.0 || !beta.is_finite() {
            return Err(ParamsError::BadBeta(beta));
        }
        if n < 0 {
            return Err(ParamsError::BadTruncation(n));
        }
        let params = ModelParams { q, c, beta, n };
        // Nonnegativity of F, checked on a logarithmic intensity grid up to 1e3.
        let mut x = 1e-9;
        while x <= 1.0e3 {
            let value = params.potential(x);
            if value < 0.0 {
                return Err(ParamsError::NotDefocusing { x, value });
            }
            x *= 1.1;
        }
        Ok(params)
    }

    /// Parameters with every interaction coefficient zero, for exercising the
    /// linear flow and unit-weight sampling paths. The standing c₂ ≠ 0
    /// requirement applies to [`ModelParams::new`] only.
    pub fn linear_only(q: usize, beta: f64, n: i32) -> Result<Self, ParamsError> {
        if q < 2 {
            return Err(ParamsError::DegreeTooSmall(q));
        }
        if beta <= 0.0 || !beta.is_finite() {
            return Err(ParamsError::BadBeta(beta));
        }
        if n < 0 {
            return Err(ParamsError::BadTruncation(n));
        }
        Ok(ModelParams { q, c: vec![0.0; q - 1], beta, n })
    }

    pub fn truncation(&self) -> i32 {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    /// Coefficient c_j for 2 <= j <= q.
    pub fn coefficient(&self, j: usize) -> f64 {
        self.c[j - 2]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// F(x) = Σ_j c_j x^j.
    pub fn potential(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for j in (2..=self.q).rev() {
            acc = (acc + self.coefficient(j)) * x;
        }
        acc * x
    }

    /// Density of the interaction energy: Σ_j (c_j / 2j) u^j.
    pub fn interaction_density(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for j in (2..=self.q).rev() {
            acc = (acc + self.coefficient(j) / (2.0 * j as f64)) * u;
        }
        acc * u
    }

    /// Phase rotation rate of the nonlinear subflow at intensity u:
    /// d/du of the interaction density, i.e. (1/2) Σ_j c_j u^{j-1}.
    pub fn rotation_rate(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for j in (2..=self.q).rev() {
            acc = acc * u + 0.5 * self.coefficient(j);
        }
        acc * u
    }

    /// Smallest grid length giving exact quadrature for the occurring
    /// trigonometric degrees: 2qN + 1 points.
    pub fn required_grid_len(&self) -> usize {
        2 * self.q * self.n.unsigned_abs() as usize + 1
    }

    /// Default grid length: next power of two at or above the exact-quadrature
    /// minimum.
    pub fn grid_len(&self) -> usize {
        self.required_grid_len().next_power_of_two()
    }
}

/// A point of the truncated phase space: complex Fourier coefficients ψₖ for
/// |k| ≤ N under the convention ψ(x) = (2π)^{−1/2} Σₖ ψₖ e^{ikx}.
///
/// States are immutable values; every operation on them is pure, and grid
/// evaluations are recomputed on demand rather than cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierState {
    n: i32,
    /// Length 2n+1, index k + n.
    coeffs: Vec<Complex64>,
}

impl FourierState {
    pub fn zeros(n: i32) -> Self {
        assert!(n >= 0, "truncation radius must be nonnegative");
        FourierState { n, coeffs: vec![Complex64::ZERO; 2 * n as usize + 1] }
    }

    pub fn from_coeffs(n: i32, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), 2 * n as usize + 1);
        FourierState { n, coeffs }
    }

    pub fn from_modes(n: i32, modes: &[(i32, Complex64)]) -> Result<Self, StateError> {
        let mut state = FourierState::zeros(n);
        let mut seen = vec![false; state.coeffs.len()];
        for &(k, value) in modes {
            if k.unsigned_abs() > n.unsigned_abs() {
                return Err(StateError::InvalidMode { k, n });
            }
            let idx = (k + n) as usize;
            if seen[idx] {
                return Err(StateError::DuplicateMode { k });
            }
            seen[idx] = true;
            state.coeffs[idx] = value;
        }
        Ok(state)
    }

    pub fn truncation(&self) -> i32 {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of mode k; zero outside the truncation.
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn mode(&self, k: i32) -> Complex64 {
        if k.unsigned_abs() > self.n.unsigned_abs() {
            Complex64::ZERO
        } else {
            self.coeffs[(k + self.n) as usize]
        }
    }

    /// In-place assignment; panics out of range (loop-building use).
    pub fn set_mode(&mut self, k: i32, value: Complex64) {
        assert!(k.unsigned_abs() <= self.n.unsigned_abs(), "mode {k} outside |k| <= {}", self.n);
        self.coeffs[(k + self.n) as usize] = value;
    }

    pub fn with_mode(&self, k: i32, value: Complex64) -> Result<Self, StateError> {
        if k.unsigned_abs() > self.n.unsigned_abs() {
            return Err(StateError::InvalidMode { k, n: self.n });
        }
        let mut out = self.clone();
        out.coeffs[(k + self.n) as usize] = value;
        Ok(out)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        FourierState {
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Restriction to |k| ≤ m (m ≤ N returns a shorter vector, m ≥ N pads with
    /// zeros).
    pub fn restricted(&self, m: i32) -> Self {
        let mut out = FourierState::zeros(m);
        for k in -m.min(self.n)..=m.min(self.n) {
            out.coeffs[(k + m) as usize] = self.mode(k);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), StateError> {
        for k in -self.n..=self.n {
            let c = self.mode(k);
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(StateError::NonFinite { k });
            }
        }
        Ok(())
    }
}

/// ‖ψ‖_{H^{s}} = √(Σₖ (1+k²)^s |ψₖ|²).
pub fn hs_norm(state: &FourierState, s: f64) -> f64 {
    let n = state.truncation();
    let mut sum = 0.0;
    for k in -n..=n {
        let w = (1.0 + (k as f64) * (k as f64)).powf(s);
        sum += w * state.mode(k).norm_sqr();
    }
    sum.sqrt()
}

/// The action of mode k: |ψₖ|².
pub fn action(state: &FourierState, k: i32) -> Result<f64, StateError> {
    if k.unsigned_abs() > state.truncation().unsigned_abs() {
        return Err(StateError::InvalidMode { k, n: state.truncation() });
    }
    Ok(state.mode(k).norm_sqr())
}

static PLAN_CACHE: OnceLock<Mutex<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>> =
    OnceLock::new();

fn plans(m: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let cache = PLAN_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    cache
        .entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
        })
        .clone()
}

/// Evaluation of ψ on m equispaced grid points of [0, 2π) and back.
///
/// The transforms are exact inverses of each other, and quadrature of a
/// product of field factors is exact as long as the total trigonometric
/// degree stays below m.
pub struct SpectralGrid {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralGrid {
    pub fn new(m: usize) -> Self {
        let (forward, inverse) = plans(m);
        SpectralGrid { m, forward, inverse }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Grid values ψ(x_j), x_j = 2πj/m. Requires m ≥ 2N+1 so that no mode
    /// aliases into another.
    pub fn to_grid(&self, state: &FourierState) -> Vec<Complex64> {
        let mut buf = vec![Complex64::ZERO; self.m];
        self.fill_grid(state, &mut buf);
        buf
    }

    pub fn fill_grid(&self, state: &FourierState, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.m);
        let n = state.truncation();
        assert!(self.m >= 2 * n as usize + 1, "grid too short for truncation {n}");
        buf.fill(Complex64::ZERO);
        let scale = Complex64::new(1.0 / TWO_PI.sqrt(), 0.0);
        for k in -n..=n {
            let bin = k.rem_euclid(self.m as i32) as usize;
            buf[bin] = state.mode(k) * scale;
        }
        self.inverse.process(buf);
    }

    /// Projection of grid values back to modes |k| ≤ n.
    pub fn from_grid(&self, buf: &mut [Complex64], n: i32) -> FourierState {
        assert_eq!(buf.len(), self.m);
        self.forward.process(buf);
        let scale = TWO_PI.sqrt() / self.m as f64;
        let mut coeffs = vec![Complex64::ZERO; 2 * n as usize + 1];
        for k in -n..=n {
            let bin = k.rem_euclid(self.m as i32) as usize;
            coeffs[(k + n) as usize] = buf[bin] * scale;
        }
        FourierState::from_coeffs(n, coeffs)
    }
}

/// Interaction energy P(ψ) = Σ_j (c_j/2j) ∫ |ψ(x)|^{2j} dx by exact grid
/// quadrature at the default grid length.
pub fn interaction_energy(state: &FourierState, params: &ModelParams) -> f64 {
    interaction_energy_with_grid(state, params, params.grid_len())
        .expect("default grid length is always sufficient")
}

/// Same as [`interaction_energy`] on a caller-chosen grid length; errors when
/// the grid cannot integrate the occurring trigonometric degree exactly.
pub fn interaction_energy_with_grid(
    state: &FourierState,
    params: &ModelParams,
    m: usize,
) -> Result<f64, StateError> {
    let required = 2 * params.degree() * state.truncation().unsigned_abs() as usize + 1;
    if m < required {
        return Err(StateError::GridResolution { required, got: m });
    }
    let grid = SpectralGrid::new(m);
    let values = grid.to_grid(state);
    let dx = TWO_PI / m as f64;
    let mut sum = 0.0;
    for v in &values {
        sum += params.interaction_density(v.norm_sqr());
    }
    Ok(sum * dx)
}

/// Gradient ∂E/∂ψ̄ₖ of the conserved energy E = Σₖ k²|ψₖ|² + P, per mode:
/// k²ψₖ plus the mode-k coefficient of rotation_rate(|ψ|²)·ψ. The flow is
/// i ψ̇ₖ = gradient(k).
pub fn energy_gradient(state: &FourierState, params: &ModelParams) -> Vec<Complex64> {
    let n = state.truncation();
    let m = params.grid_len();
    let grid = SpectralGrid::new(m);
    let mut buf = grid.to_grid(state);
    for v in buf.iter_mut() {
        *v *= params.rotation_rate(v.norm_sqr());
    }
    let nonlinear = grid.from_grid(&mut buf, n);
    let mut out = Vec::with_capacity(2 * n as usize + 1);
    for k in -n..=n {
        let kk = (k as f64) * (k as f64);
        out.push(state.mode(k) * kk + nonlinear.mode(k));
    }
    out
}

/// Conserved energy of the flow: Σₖ k²|ψₖ|² + P(ψ).
pub fn conserved_energy(state: &FourierState, params: &ModelParams) -> f64 {
    let n = state.truncation();
    let mut quad = 0.0;
    for k in -n..=n {
        quad += (k as f64) * (k as f64) * state.mode(k).norm_sqr();
    }
    quad + interaction_energy(state, params)
}

/// JSON snapshot of a state: `{"n": .., "beta_hint": .., "modes": [[k, re, im], ..]}`.
/// Zero modes are omitted on write; loaders reject duplicate modes.
#[derive(Debug, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub n: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hint: Option<f64>,
    pub modes: Vec<(i32, f64, f64)>,
}

impl StateSnapshot {
    pub fn of(state: &FourierState, beta_hint: Option<f64>) -> Self {
        let n = state.truncation();
        let mut modes = Vec::new();
        for k in -n..=n {
            let c = state.mode(k);
            if c != Complex64::ZERO {
                modes.push((k, c.re, c.im));
            }
        }
        StateSnapshot { n, beta_hint, modes }
    }

    pub fn into_state(self) -> Result<FourierState, StateError> {
        let modes: Vec<(i32, Complex64)> = self
            .modes
            .iter()
            .map(|&(k, re, im)| (k, Complex64::new(re, im)))
            .collect();
        FourierState::from_modes(self.n, &modes)
    }
}

pub fn state_to_json(state: &FourierState, beta_hint: Option<f64>) -> String {
    serde_json::to_string(&StateSnapshot::of(state, beta_hint)).expect("snapshot serializes")
}

pub fn state_from_json(text: &str) -> Result<(FourierState, Option<f64>), StateError> {
    let snapshot: StateSnapshot =
        serde_json::from_str(text).map_err(|e| StateError::Snapshot(e.to_string()))?;
    let beta_hint = snapshot.beta_hint;
    Ok((snapshot.into_state()?, beta_hint))
}
