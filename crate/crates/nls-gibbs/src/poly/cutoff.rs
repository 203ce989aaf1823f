//! Smooth resonance cutoff ρ and its scaled derivatives.
//!
//! ρ(x) = S(|x| − 1) with the standard smooth step S(t) = g(t)/(g(t) + g(1−t)),
//! g(t) = e^{−1/t} for t > 0 and 0 otherwise. So ρ vanishes identically for
//! |x| ≤ 1, equals 1 for |x| ≥ 2, and interpolates smoothly in between. All
//! derivatives are computed in closed form; the gradient and second-derivative
//! contractions elsewhere rely on them matching finite differences.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CutoffError {
    #[error("cutoff width {delta} with beta {beta} violates 0 < delta*beta < 1")]
    WidthOutOfRange { delta: f64, beta: f64 },
}

/// Below this argument g(t) = e^{−1/t} is ≤ e^{−250}; treating the step as
/// exactly flat there avoids 0·∞ in the derivative quotients.
const FLAT_T: f64 = 0.004;

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// (S, S′, S″) at t for the smooth step S(t) = g(t)/(g(t)+g(1−t)).
fn step_jet(t: f64) -> (f64, f64, f64) {
    if t <= FLAT_T {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 - FLAT_T {
        return (1.0, 0.0, 0.0);
    }
    let g = bump(t);
    let h = bump(1.0 - t);
    let denom = g + h;
    let s = g / denom;
    let it2 = 1.0 / (t * t);
    let iu2 = 1.0 / ((1.0 - t) * (1.0 - t));
    let w = it2 + iu2;
    let s1 = g * h * w / (denom * denom);
    // S″ = gh[(w(t⁻² − (1−t)⁻²) + w′)(g+h) − 2w(g t⁻² − h (1−t)⁻²)]/(g+h)³
    let wp = -2.0 * it2 / t + 2.0 * iu2 / (1.0 - t);
    let s2 = g * h * ((w * (it2 - iu2) + wp) * denom - 2.0 * w * (g * it2 - h * iu2))
        / (denom * denom * denom);
    (s, s1, s2)
}

/// Resonance cutoff at width δ: evaluates ρ and derivatives at a/δ with the
/// 1/δ scaling factors that appear under the chain rule already applied.
///
/// The forced-flat variant pins ρ ≡ 1 with zero derivatives, which removes
/// the small-divisor protection entirely; it exists for identity checks that
/// compare against the uncut construction and is never the default.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CutoffSpec {
    delta: f64,
    forced_one: bool,
}

impl CutoffSpec {
    /// Width from the default rule δ = β^(−13/10).
    pub fn auto_width(beta: f64) -> f64 {
        beta.powf(-1.3)
    }

    pub fn for_beta(delta: f64, beta: f64) -> Result<Self, CutoffError> {
        if !(delta > 0.0 && delta * beta > 0.0 && delta * beta < 1.0) {
            return Err(CutoffError::WidthOutOfRange { delta, beta });
        }
        Ok(CutoffSpec { delta, forced_one: false })
    }

    /// ρ ≡ 1 everywhere (no protected region); δ kept for bookkeeping.
    pub fn forced_one(delta: f64) -> Self {
        CutoffSpec { delta, forced_one: true }
    }

    pub fn is_forced_one(&self) -> bool {
        self.forced_one
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// ρ(x): 0 on |x| ≤ 1, 1 on |x| ≥ 2.
    pub fn rho_raw(x: f64) -> f64 {
        step_jet(x.abs() - 1.0).0
    }

    /// ρ′(x), accounting for the |x| fold.
    pub fn drho_raw(x: f64) -> f64 {
        let s1 = step_jet(x.abs() - 1.0).1;
        if x < 0.0 {
            -s1
        } else {
            s1
        }
    }

    /// ρ″(x); even in x.
    pub fn ddrho_raw(x: f64) -> f64 {
        step_jet(x.abs() - 1.0).2
    }

    /// ρ(a/δ).
    pub fn rho(&self, a: f64) -> f64 {
        if self.forced_one {
            return 1.0;
        }
        Self::rho_raw(a / self.delta)
    }

    /// d/da ρ(a/δ) = ρ′(a/δ)/δ.
    pub fn drho(&self, a: f64) -> f64 {
        if self.forced_one {
            return 0.0;
        }
        Self::drho_raw(a / self.delta) / self.delta
    }

    /// d²/da² ρ(a/δ) = ρ″(a/δ)/δ².
    pub fn ddrho(&self, a: f64) -> f64 {
        if self.forced_one {
            return 0.0;
        }
        Self::ddrho_raw(a / self.delta) / (self.delta * self.delta)
    }
}
