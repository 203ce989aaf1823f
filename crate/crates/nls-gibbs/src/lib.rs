//! Gibbs-measure experiments for the defocusing nonlinear Schrödinger equation
//! on the one-dimensional torus.
//!
//! The crate works with the Galerkin truncation of
//!
//! ```text
//! i ψ̇ = −Δψ + f(|ψ|²) ψ,          x ∈ [0, 2π),
//! ```
//!
//! to Fourier modes |k| ≤ N, with a defocusing polynomial nonlinearity. Around
//! this flow it provides four groups of functionality:
//!
//! * **Phase space** ([`state`]): truncated Fourier vectors with the convention
//!   ψ(x) = (2π)^{−1/2} Σₖ ψₖ e^{ikx}, Sobolev norms, the interaction energy
//!   P = Σⱼ (cⱼ/2j) ∫ |ψ|^{2j} dx, and the energy gradient that drives the flow.
//! * **Measures** ([`gibbs`]): exact sampling of the Gaussian measure with
//!   per-mode variance E|ψₖ|² = 2/(β(1+k²)), reweighting to the Gibbs measure by
//!   e^{−βP} with self-normalized importance sampling, effective-sample-size
//!   diagnostics, an independence Metropolis cross-check, and Monte Carlo
//!   estimates of tail, small-ball, and partition-ratio quantities.
//! * **Polynomial algebra and normal form** ([`poly`], [`normal_form`]): sparse
//!   zero-momentum polynomials in (ψ, ψ̄), Poisson brackets, the homological
//!   operator of the quadratic flow with its kernel/range split, and the
//!   construction of a sixth-order corrected action Φ for a target mode: the
//!   generating functions χ₄, χ₆, the resonant truncations Z₄, Z₆, a smooth
//!   cutoff in the modulated frequency combination, and the correction term
//!   that cancels the quartic remainder.
//! * **Dynamics and experiments** ([`dynamics`], [`harness`]): a Strang
//!   split-step spectral integrator whose substeps conserve the L² norm
//!   exactly, and end-to-end experiments measuring drifts of the actions
//!   |ψₖ|² and of Φ along Gibbs-distributed trajectories, scaling fits of
//!   ‖dΦ/dt‖ in the inverse temperature, and Chebyshev bad-set bookkeeping.
//!
//! Conventions used throughout (all stated once here, asserted in tests):
//!
//! * Poisson bracket {f,g} = +i Σₖ (∂f/∂ψₖ ∂g/∂ψ̄ₖ − ∂g/∂ψₖ ∂f/∂ψ̄ₖ), so that
//!   d/dt f = {H, f} along the flow i ψ̇ₖ = ∂H/∂ψ̄ₖ.
//! * The flow is generated by E = Σₖ k²|ψₖ|² + P; equivalently the nonlinear
//!   phase rotation rate is (1/2) Σⱼ cⱼ u^{j−1} at intensity u = |ψ(x)|².
//!   E is the conserved energy reported by trajectory diagnostics.
//! * The Gibbs density is proportional to e^{−β(½Σk²|ψₖ|² + P + ½‖ψ‖²)}, i.e.
//!   Gaussian weight e^{−(β/2)‖ψ‖²_{H¹}} times the interaction weight e^{−βP}.

pub mod dynamics;
pub mod gibbs;
pub mod harness;
pub mod normal_form;
pub mod poly;
pub mod state;

pub use num_complex::Complex64;
