//! Resonant normal form of the truncated Hamiltonian through degree six, and
//! the corrected action observable built from it.
//!
//! The chain, all in the +i bracket convention of [`crate::poly`] with the
//! unhalved quadratic energy h₂ = Σk²|ψₖ|² as the diagonal operator:
//!
//! ```text
//! h₄ = z₄ + h₄^R (resonant/nonresonant split),   χ₄ = −L⁻¹ h₄^R
//! G  = h₆ + ½{h₄^R, χ₄} + {z₄, χ₄},              z₆ = G^N,  χ₆ = −L⁻¹ G^R
//! Φ₂ = |ψ_𝚔|²,  Φ₄ = {χ₄, Φ₂},  Φ₆ = ½{χ₄, Φ₄} + {χ₆, Φ₂}
//! 𝓡₆ = {Φ₂, z₆},  split by the cutoff into ρ·𝓡₆ and (1−ρ)·𝓡₆
//! Φ̃  solves {z₄, Φ̃} = ρ·𝓡₆ termwise,            Corr = {χ₄, Φ̃}
//! Φ  = Φ₂ + Φ₄ + Φ₆ + Φ̃ + Corr
//! ```
//!
//! Along the flow, all contributions to dΦ/dt of monomial degree ≤ 6 cancel
//! except −(1−ρ)·𝓡₆; what is left has degree ≥ 8 and is checked here by
//! λ-scaling. The δ-independent part of the chain (everything through 𝓡₆) is
//! a [`NormalFormBase`]; attaching a cutoff yields a [`NormalFormPackage`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::cutoff::{CutoffError, CutoffSpec};
use crate::poly::modulated::{
    anchor_value, bracket_plain_modulated, Anchor, ModulatedPolynomial, ModulationTag,
};
use crate::poly::{
    bracket_value, kernel_range_split, lh2_apply, lh2_invert, poisson_bracket, Admissibility,
    Monomial, PolyError, SparsePolynomial,
};
use crate::state::{energy_gradient, FourierState, ModelParams, StateError, TWO_PI};

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error("interaction degree {j} outside 2..={q}")]
    DegreeOutOfRange { j: usize, q: usize },
    #[error("normal form needs a nonzero leading interaction coefficient")]
    LinearLeading,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Cutoff(#[from] CutoffError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("package file: {0}")]
    Package(String),
}

/// Σₖ k²|ψₖ|², the diagonal quadratic whose bracket action the kernel/range
/// machinery inverts.
pub fn quadratic_energy(n: i32) -> SparsePolynomial {
    let mut poly = SparsePolynomial::new(2, n);
    for k in -n..=n {
        let kk = (k as f64) * (k as f64);
        if kk != 0.0 {
            poly.add_term(Monomial::action(k), Complex64::new(kk, 0.0));
        }
    }
    poly
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Ordered arrangements of a sorted index list: len! / ∏ multiplicity!.
fn arrangement_count(sorted: &[i32]) -> f64 {
    let mut count = factorial(sorted.len());
    let mut run = 1usize;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            count /= factorial(run);
            run = 1;
        }
    }
    count
}

fn sorted_tuples(min: i32, max: i32, len: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn recurse(lo: i32, max: i32, left: usize, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for e in lo..=max {
            cur.push(e);
            recurse(e, max, left - 1, cur, out);
            cur.pop();
        }
    }
    recurse(min, max, len, &mut cur, &mut out);
    out
}

fn sorted_tuples_with_sum(min: i32, max: i32, len: usize, target: i64) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn recurse(
        lo: i32,
        max: i32,
        left: usize,
        target: i64,
        cur: &mut Vec<i32>,
        out: &mut Vec<Vec<i32>>,
    ) {
        if left == 0 {
            if target == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let l = left as i64;
        for e in lo..=max {
            let rest = target - e as i64;
            // remaining left-1 entries lie in [e, max]
            if rest < (l - 1) * e as i64 || rest > (l - 1) * max as i64 {
                continue;
            }
            cur.push(e);
            recurse(e, max, left - 1, rest, cur, out);
            cur.pop();
        }
    }
    recurse(min, max, len, target, &mut cur, &mut out);
    out
}

/// Degree-2j interaction term as a polynomial: all zero-momentum monomials
/// (j holomorphic, j antiholomorphic indices in |k| ≤ N) with coefficient
/// cⱼ/(2j) · (2π)^{1−j} · (ordered-arrangement counts of both halves), so that
/// its value equals (cⱼ/2j)∫|ψ|^{2j}dx.
pub fn build_h2j(params: &ModelParams, j: usize) -> Result<SparsePolynomial, NormalFormError> {
    if j < 2 || j > params.degree() {
        return Err(NormalFormError::DegreeOutOfRange { j, q: params.degree() });
    }
    let n = params.truncation();
    let mut poly = SparsePolynomial::new(2 * j, n);
    let cj = params.coefficient(j);
    if cj == 0.0 {
        return Ok(poly);
    }
    let base = cj / (2.0 * j as f64) * TWO_PI.powi(1 - j as i32);
    for holo in sorted_tuples(-n, n, j) {
        let sum: i64 = holo.iter().map(|&k| k as i64).sum();
        let perm_h = arrangement_count(&holo);
        for anti in sorted_tuples_with_sum(-n, n, j, sum) {
            let coeff = base * perm_h * arrangement_count(&anti);
            poly.add_term(
                Monomial::new(holo.clone(), anti),
                Complex64::new(coeff, 0.0),
            );
        }
    }
    Ok(poly)
}

/// Closed form of the degree-4 resonant part: (2π)^{−1}[(c₂/2)(Σ|ψₖ|²)² −
/// (c₂/4)Σ|ψₖ|⁴] expanded over canonical monomials.
pub fn z4_closed_form(params: &ModelParams) -> SparsePolynomial {
    let n = params.truncation();
    let c2 = params.coefficient(2);
    let mut poly = SparsePolynomial::new(4, n);
    for a in -n..=n {
        for b in a..=n {
            let coeff = if a == b { c2 / (4.0 * TWO_PI) } else { c2 / TWO_PI };
            poly.add_term(
                Monomial::new(vec![a, b], vec![a, b]),
                Complex64::new(coeff, 0.0),
            );
        }
    }
    poly
}

/// δ-independent part of the construction at one (N, 𝚔).
#[derive(Debug, Clone)]
pub struct NormalFormBase {
    pub params: ModelParams,
    pub tk: i32,
    pub h2: SparsePolynomial,
    pub h4: SparsePolynomial,
    pub h6: SparsePolynomial,
    pub z4: SparsePolynomial,
    pub chi4: SparsePolynomial,
    pub h4_range: SparsePolynomial,
    pub z6: SparsePolynomial,
    pub chi6: SparsePolynomial,
    pub g_range: SparsePolynomial,
    pub phi_k2: SparsePolynomial,
    pub phi_k4: SparsePolynomial,
    pub phi_k6: SparsePolynomial,
    /// {Φ₂, z₆}: the degree-6 obstruction to exact invariance.
    pub r6: SparsePolynomial,
}

impl NormalFormBase {
    pub fn truncation(&self) -> i32 {
        self.params.truncation()
    }
}

pub fn build_base(params: &ModelParams, tk: i32) -> Result<NormalFormBase, NormalFormError> {
    if params.coefficient(2) == 0.0 {
        return Err(NormalFormError::LinearLeading);
    }
    let n = params.truncation();
    assert!(tk.abs() <= n, "target mode {tk} outside truncation {n}");
    let h2 = quadratic_energy(n);
    let h4 = build_h2j(params, 2)?;
    let h6 = if params.degree() >= 3 {
        build_h2j(params, 3)?
    } else {
        SparsePolynomial::new(6, n)
    };

    let (z4, h4_range) = kernel_range_split(&h4);
    let chi4 = lh2_invert(&h4_range)?.scaled(Complex64::new(-1.0, 0.0));

    let mut g = h6.clone();
    g.add_assign_scaled(&poisson_bracket(&h4_range, &chi4)?, Complex64::new(0.5, 0.0));
    g.add_assign_scaled(&poisson_bracket(&z4, &chi4)?, Complex64::ONE);
    g.compress(1e-15 * (1.0 + g.sup_norm()));
    let (z6, g_range) = kernel_range_split(&g);
    let chi6 = lh2_invert(&g_range)?.scaled(Complex64::new(-1.0, 0.0));

    let phi_k2 = SparsePolynomial::action(tk, n);
    let phi_k4 = poisson_bracket(&chi4, &phi_k2)?;
    let mut phi_k6 = poisson_bracket(&chi4, &phi_k4)?.scaled(Complex64::new(0.5, 0.0));
    let chi6_part = poisson_bracket(&chi6, &phi_k2)?;
    phi_k6.add_assign_scaled(&chi6_part, Complex64::ONE);
    phi_k6.set_admissibility(Some(Admissibility { m: 4, tk }));

    let mut r6 = poisson_bracket(&phi_k2, &z6)?;
    r6.compress(1e-16 * (1.0 + r6.sup_norm()));

    Ok(NormalFormBase {
        params: params.clone(),
        tk,
        h2,
        h4,
        h6,
        z4,
        chi4,
        h4_range,
        z6,
        chi6,
        g_range,
        phi_k2,
        phi_k4,
        phi_k6,
        r6,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DeltaRule {
    /// β^(−13/10).
    Auto,
    Fixed(f64),
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Auto
    }
}

impl DeltaRule {
    pub fn width(&self, beta: f64) -> f64 {
        match self {
            DeltaRule::Auto => CutoffSpec::auto_width(beta),
            DeltaRule::Fixed(delta) => *delta,
        }
    }
}

/// Base plus everything that depends on the cutoff width.
#[derive(Debug, Clone)]
pub struct NormalFormPackage {
    pub base: NormalFormBase,
    pub cutoff: CutoffSpec,
    pub delta_rule: DeltaRule,
    /// ρ-weighted part of 𝓡₆ (the part removed by Φ̃).
    pub r6_nr: ModulatedPolynomial,
    /// (1−ρ)-weighted part of 𝓡₆ (the resonant remainder).
    pub r6_r: ModulatedPolynomial,
    pub tilde_phi6: ModulatedPolynomial,
    /// {χ₄, Φ̃}.
    pub correction: ModulatedPolynomial,
    /// Φ₂ + Φ₄ + Φ₆ + Φ̃ + Corr as one evaluable object.
    pub phi6_total: ModulatedPolynomial,
}

/// Assembles the cutoff-dependent layer. Φ̃ has one term per monomial of 𝓡₆,
/// with coefficient −i·r_m/(c₂/4π) and weight ρ(a/δ)/a anchored at the
/// monomial's own indices; termwise this solves {z₄, Φ̃} = ρ·𝓡₆ because
/// {z₄, ·} multiplies a monomial by i·(c₂/4π)·a.
pub fn build_package(
    base: NormalFormBase,
    delta_rule: DeltaRule,
    cutoff: CutoffSpec,
) -> Result<NormalFormPackage, NormalFormError> {
    let n = base.truncation();
    let tk = base.tk;
    let r6_nr = ModulatedPolynomial::from_self_anchored(&base.r6, ModulationTag::Rho);
    let r6_r = ModulatedPolynomial::from_self_anchored(&base.r6, ModulationTag::OneMinusRho);

    let cmod = base.params.coefficient(2) / (2.0 * TWO_PI);
    let mut tilde_phi6 = ModulatedPolynomial::new(n);
    let minus_i_over_cmod = Complex64::new(0.0, -1.0 / cmod);
    for (m, c) in base.r6.terms() {
        tilde_phi6.add_term(
            m.clone(),
            crate::poly::modulated::anchor_of(m),
            ModulationTag::RhoOverA,
            c * minus_i_over_cmod,
        );
    }
    tilde_phi6.set_admissibility(Some(Admissibility { m: 2, tk }));

    let correction = bracket_plain_modulated(&base.chi4, &tilde_phi6)?;

    let mut phi6_total = ModulatedPolynomial::new(n);
    for plain in [&base.phi_k2, &base.phi_k4, &base.phi_k6] {
        for (m, c) in plain.terms() {
            phi6_total.add_term(m.clone(), [0; 6], ModulationTag::One, c);
        }
    }
    phi6_total.add_assign_scaled(&tilde_phi6, Complex64::ONE);
    phi6_total.add_assign_scaled(&correction, Complex64::ONE);
    phi6_total.set_admissibility(Some(Admissibility { m: 4, tk }));

    Ok(NormalFormPackage {
        base,
        cutoff,
        delta_rule,
        r6_nr,
        r6_r,
        tilde_phi6,
        correction,
        phi6_total,
    })
}

pub fn build(
    params: &ModelParams,
    tk: i32,
    delta_rule: DeltaRule,
) -> Result<NormalFormPackage, NormalFormError> {
    let base = build_base(params, tk)?;
    let delta = delta_rule.width(params.beta);
    let cutoff = CutoffSpec::for_beta(delta, params.beta)?;
    build_package(base, delta_rule, cutoff)
}

/// Signed action sum of a sextuple: first three indices +, last three −.
pub fn a_value(state: &FourierState, sextuple: &Anchor) -> f64 {
    anchor_value(sextuple, state)
}

/// Per-mode frequency shift c₂(|ψⱼ|² + Σₖ|ψₖ|²); differences of six of these
/// reproduce c₂·a_value for the matching sextuple.
pub fn omega(state: &FourierState, params: &ModelParams, j: i32) -> f64 {
    let total: f64 = (-state.truncation()..=state.truncation())
        .map(|k| state.mode(k).norm_sqr())
        .sum();
    params.coefficient(2) * (state.mode(j).norm_sqr() + total)
}

impl NormalFormPackage {
    pub fn truncation(&self) -> i32 {
        self.base.truncation()
    }

    pub fn evaluate(&self, state: &FourierState) -> f64 {
        let value = self.phi6_total.evaluate(&self.cutoff, state);
        assert!(
            value.im.abs() <= 1e-12 * (1.0 + value.norm()),
            "imaginary residue {} in a real-valued observable",
            value.im
        );
        value.re
    }

    /// {H, Φ} at the state via gradient contraction against the full-energy
    /// gradient (kinetic plus every interaction order of the params).
    pub fn time_derivative(&self, state: &FourierState) -> f64 {
        let g = energy_gradient(state, &self.base.params);
        let dphi = self.phi6_total.gradient(&self.cutoff, state);
        let dh: (Vec<Complex64>, Vec<Complex64>) =
            (g.iter().map(|v| v.conj()).collect(), g);
        let value = bracket_value(&dh, &dphi);
        value.re
    }

    /// {H, |ψ_𝚔|²}: the uncorrected action derivative, the baseline the
    /// sixth-order object is supposed to beat.
    pub fn action_rate(&self, state: &FourierState) -> f64 {
        let g = energy_gradient(state, &self.base.params);
        let dphi = self.base.phi_k2.gradient(state);
        let dh: (Vec<Complex64>, Vec<Complex64>) =
            (g.iter().map(|v| v.conj()).collect(), g);
        bracket_value(&dh, &dphi).re
    }

    /// Value of the resonant remainder −(1−ρ)𝓡₆ subtracted from {H, Φ}; the
    /// difference is the degree-8 tail.
    pub fn remainder_value(&self, state: &FourierState) -> f64 {
        let v = self.r6_r.evaluate(&self.cutoff, state);
        v.re
    }

    /// Sum of every degree ≤ 6 line of d/dt Φ plus the resonant remainder:
    /// {h₂,Φ₄}+{h₄,Φ₂} + {h₂,Φ₆}+{h₄,Φ₄}+{h₆,Φ₂} + {h₄,Φ̃}+{h₂,Corr} +
    /// (1−ρ)𝓡₆, which cancels identically; its numeric size is the
    /// order-six closure residue.
    pub fn order6_residue(&self, state: &FourierState) -> (f64, f64) {
        let b = &self.base;
        let grad = |p: &SparsePolynomial| p.gradient(state);
        let gmod =
            |p: &ModulatedPolynomial| p.gradient(&self.cutoff, state);
        let dh2 = grad(&b.h2);
        let dh4 = grad(&b.h4);
        let dh6 = grad(&b.h6);
        let dphi2 = grad(&b.phi_k2);
        let dphi4 = grad(&b.phi_k4);
        let dphi6 = grad(&b.phi_k6);
        let dtilde = gmod(&self.tilde_phi6);
        let dcorr = gmod(&self.correction);
        let mut total = Complex64::ZERO;
        let mut scale = 0.0f64;
        for (df, dg) in [
            (&dh2, &dphi4),
            (&dh4, &dphi2),
            (&dh2, &dphi6),
            (&dh4, &dphi4),
            (&dh6, &dphi2),
            (&dh4, &dtilde),
            (&dh2, &dcorr),
        ] {
            let v = bracket_value(df, dg);
            total += v;
            scale = scale.max(v.norm());
        }
        let rem = self.r6_r.evaluate(&self.cutoff, state);
        total += rem;
        scale = scale.max(rem.norm());
        (total.norm(), scale)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: i32,
    pub tk: i32,
    pub beta: f64,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<IdentityCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, tolerance: f64) -> IdentityCheck {
    IdentityCheck { name: name.into(), value, tolerance, pass: value <= tolerance }
}

/// Coefficient-level and sampled identity checks on a built package.
pub fn verify_identities(
    pkg: &NormalFormPackage,
    samples: usize,
    seed: u64,
) -> Result<IdentityReport, NormalFormError> {
    let b = &pkg.base;
    let mut checks = Vec::new();

    let mut hom4 = lh2_apply(&b.chi4);
    hom4.add_assign_scaled(&b.h4_range, Complex64::ONE);
    checks.push(check("homological_deg4", hom4.sup_norm(), 1e-12));

    let mut hom6 = lh2_apply(&b.chi6);
    hom6.add_assign_scaled(&b.g_range, Complex64::ONE);
    checks.push(check("homological_deg6", hom6.sup_norm(), 1e-12));

    checks.push(check("z4_in_kernel", lh2_apply(&b.z4).sup_norm(), 0.0));
    checks.push(check("z6_in_kernel", lh2_apply(&b.z6).sup_norm(), 0.0));

    let mut z4_diff = b.z4.clone();
    z4_diff.add_assign_scaled(&z4_closed_form(&b.params), Complex64::new(-1.0, 0.0));
    checks.push(check("z4_closed_form", z4_diff.sup_norm(), 1e-12));

    let mut order4 = lh2_apply(&b.phi_k4);
    order4.add_assign_scaled(&poisson_bracket(&b.h4, &b.phi_k2)?, Complex64::ONE);
    checks.push(check("order4_cancellation", order4.sup_norm(), 1e-12));

    // Sampled checks: {z4, Φ̃} = ρ𝓡₆ and the order-6 closure residue.
    let mut max_nonres_rel = 0.0f64;
    let mut max_order6_rel = 0.0f64;
    let mut max_im_rel = 0.0f64;
    for i in 0..samples {
        let state = crate::gibbs::sample_gaussian(&b.params, seed, i as u64, 1)
            .pop()
            .expect("one sample");
        let dz4 = b.z4.gradient(&state);
        let dtilde = pkg.tilde_phi6.gradient(&pkg.cutoff, &state);
        let lhs = bracket_value(&dz4, &dtilde);
        let rhs = pkg.r6_nr.evaluate(&pkg.cutoff, &state);
        let scale = rhs.norm().max(lhs.norm()).max(1e-300);
        if !pkg.r6_nr.is_empty() {
            max_nonres_rel = max_nonres_rel.max((lhs - rhs).norm() / scale);
        }
        let (residue, res_scale) = pkg.order6_residue(&state);
        max_order6_rel = max_order6_rel.max(residue / res_scale.max(1e-300));
        let value = pkg.phi6_total.evaluate(&pkg.cutoff, &state);
        max_im_rel = max_im_rel.max(value.im.abs() / (1.0 + value.norm()));
    }
    checks.push(check("nonresonant_solve_sampled", max_nonres_rel, 1e-10));
    checks.push(check("order6_closure_sampled", max_order6_rel, 1e-10));
    checks.push(check("real_valued_sampled", max_im_rel, 1e-12));

    let constituent_terms = b.phi_k2.len()
        + b.phi_k4.len()
        + b.phi_k6.len()
        + pkg.tilde_phi6.len()
        + pkg.correction.len();
    checks.push(check(
        "total_term_accounting",
        (pkg.phi6_total.len() as f64 - constituent_terms as f64).abs(),
        0.0,
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok(IdentityReport {
        n: b.truncation(),
        tk: b.tk,
        beta: b.params.beta,
        delta: pkg.cutoff.delta(),
        samples,
        seed,
        checks,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub lambdas: Vec<f64>,
    pub prescale: f64,
    pub exponents: Vec<f64>,
    pub min_exponent: f64,
    pub exponent_floor: f64,
    pub forced_route_residue: f64,
    pub forced_route_tolerance: f64,
    pub skipped_empty_remainder: bool,
    pub resonant_term_count: usize,
    pub pass: bool,
}

/// Scaling check on the degree-8 tail: on each state, pre-scaled so every
/// modulation anchor sits in the dead zone of ρ at all λ in the grid,
/// {H,Φ}(λψ) + (1−ρ)𝓡₆(λψ) must fit a λ-power with exponent ≥ the floor.
/// Also runs the flat-cutoff identity route on the unscaled states, where the
/// order ≤ 6 lines cancel with no remainder at all.
pub fn derivative_decomposition_check(
    pkg: &NormalFormPackage,
    states: &[FourierState],
    lambdas: &[f64],
) -> Result<DecompositionReport, NormalFormError> {
    let exponent_floor = 7.8;
    let forced_route_tolerance = 1e-10;
    if pkg.base.r6.is_empty() {
        return Ok(DecompositionReport {
            lambdas: lambdas.to_vec(),
            prescale: 1.0,
            exponents: Vec::new(),
            min_exponent: f64::NAN,
            exponent_floor,
            forced_route_residue: 0.0,
            forced_route_tolerance,
            skipped_empty_remainder: true,
            resonant_term_count: 0,
            pass: true,
        })
    }

    let lambda_max = lambdas.iter().copied().fold(0.0f64, f64::max);
    let delta = pkg.cutoff.delta();
    let mut exponents = Vec::with_capacity(states.len());
    let mut prescale_min = 1.0f64;

    let forced = build_package(
        pkg.base.clone(),
        pkg.delta_rule,
        CutoffSpec::forced_one(delta),
    )?;
    let mut forced_route_residue = 0.0f64;

    for state in states {
        let mut max_a = 0.0f64;
        for (m, _) in pkg.base.r6.terms() {
            let anchor = crate::poly::modulated::anchor_of(m);
            max_a = max_a.max(a_value(state, &anchor).abs());
        }
        let prescale = if max_a > 0.0 {
            (delta / (1.05 * max_a * lambda_max * lambda_max)).sqrt().min(1.0)
        } else {
            1.0
        };
        prescale_min = prescale_min.min(prescale);
        let base_state = state.scaled(Complex64::new(prescale, 0.0));
        let mut xs = Vec::with_capacity(lambdas.len());
        let mut ys = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let scaled = base_state.scaled(Complex64::new(lambda, 0.0));
            let residual =
                pkg.time_derivative(&scaled) + pkg.remainder_value(&scaled);
            if residual.abs() > 0.0 {
                xs.push(lambda.ln());
                ys.push(residual.abs().ln());
            }
        }
        if xs.len() >= 2 {
            exponents.push(crate::gibbs::least_squares_line(&xs, &ys).0);
        }

        let (residue, scale) = forced.order6_residue(state);
        forced_route_residue = forced_route_residue.max(residue / scale.max(1e-300));
    }

    let min_exponent = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = !exponents.is_empty()
        && min_exponent >= exponent_floor
        && forced_route_residue <= forced_route_tolerance;
    Ok(DecompositionReport {
        lambdas: lambdas.to_vec(),
        prescale: prescale_min,
        exponents,
        min_exponent,
        exponent_floor,
        forced_route_residue,
        forced_route_tolerance,
        skipped_empty_remainder: false,
        resonant_term_count: pkg.base.r6.len(),
        pass,
    })
}

fn poly_terms_json(poly: &SparsePolynomial) -> serde_json::Value {
    let terms: Vec<serde_json::Value> = poly
        .terms()
        .map(|(m, c)| {
            serde_json::json!({
                "holo": m.holo(),
                "anti": m.anti(),
                "re": c.re,
                "im": c.im,
                "tag": "one",
            })
        })
        .collect();
    serde_json::json!({
        "degree": poly.degree(),
        "admissibility": poly.admissibility(),
        "terms": terms,
    })
}

fn modulated_terms_json(poly: &ModulatedPolynomial) -> serde_json::Value {
    let terms: Vec<serde_json::Value> = poly
        .terms()
        .map(|(m, anchor, tag, c)| {
            serde_json::json!({
                "holo": m.holo(),
                "anti": m.anti(),
                "re": c.re,
                "im": c.im,
                "tag": tag.name(),
                "anchor": anchor,
            })
        })
        .collect();
    serde_json::json!({
        "admissibility": poly.admissibility(),
        "terms": terms,
    })
}

fn poly_from_json(
    v: &serde_json::Value,
    n: i32,
    what: &str,
) -> Result<SparsePolynomial, NormalFormError> {
    let degree = v["degree"]
        .as_u64()
        .ok_or_else(|| NormalFormError::Package(format!("{what}: missing degree")))?
        as usize;
    let terms = v["terms"]
        .as_array()
        .ok_or_else(|| NormalFormError::Package(format!("{what}: missing terms")))?;
    let text: String = terms.iter().map(|t| t.to_string() + "\n").collect();
    let mut poly = SparsePolynomial::from_jsonl(&text, degree, n)?;
    let adm: Option<Admissibility> =
        serde_json::from_value(v["admissibility"].clone()).unwrap_or(None);
    poly.set_admissibility(adm);
    Ok(poly)
}

fn modulated_from_json(
    v: &serde_json::Value,
    n: i32,
    what: &str,
) -> Result<ModulatedPolynomial, NormalFormError> {
    let terms = v["terms"]
        .as_array()
        .ok_or_else(|| NormalFormError::Package(format!("{what}: missing terms")))?;
    let mut text = String::new();
    for t in terms {
        text.push_str(&t.to_string());
        text.push('\n');
    }
    let mut poly = ModulatedPolynomial::from_jsonl(&text, n)?;
    let adm: Option<Admissibility> =
        serde_json::from_value(v["admissibility"].clone()).unwrap_or(None);
    poly.set_admissibility(adm);
    Ok(poly)
}

impl NormalFormPackage {
    /// Full serialization; deterministic term order (canonical monomial
    /// order), suitable for golden comparison.
    pub fn to_json(&self) -> serde_json::Value {
        let b = &self.base;
        serde_json::json!({
            "n": b.truncation(),
            "tk": b.tk,
            "q": b.params.degree(),
            "c": b.params.coefficients(),
            "beta": b.params.beta,
            "delta": self.cutoff.delta(),
            "delta_rule": self.delta_rule,
            "forced_flat_cutoff": self.cutoff.is_forced_one(),
            "h4": poly_terms_json(&b.h4),
            "h6": poly_terms_json(&b.h6),
            "z4": poly_terms_json(&b.z4),
            "chi4": poly_terms_json(&b.chi4),
            "z6": poly_terms_json(&b.z6),
            "chi6": poly_terms_json(&b.chi6),
            "phi_k2": poly_terms_json(&b.phi_k2),
            "phi_k4": poly_terms_json(&b.phi_k4),
            "phi_k6": poly_terms_json(&b.phi_k6),
            "r6": poly_terms_json(&b.r6),
            "tilde_phi6": modulated_terms_json(&self.tilde_phi6),
            "correction": modulated_terms_json(&self.correction),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, NormalFormError> {
        let n = v["n"].as_i64().ok_or_else(|| NormalFormError::Package("missing n".into()))?
            as i32;
        let tk = v["tk"].as_i64().ok_or_else(|| NormalFormError::Package("missing tk".into()))?
            as i32;
        let q = v["q"].as_u64().ok_or_else(|| NormalFormError::Package("missing q".into()))?
            as usize;
        let c: Vec<f64> = serde_json::from_value(v["c"].clone())
            .map_err(|e| NormalFormError::Package(format!("bad c: {e}")))?;
        let beta = v["beta"]
            .as_f64()
            .ok_or_else(|| NormalFormError::Package("missing beta".into()))?;
        let params = ModelParams::new(q, c, beta, n)
            .map_err(|e| NormalFormError::Package(format!("bad params: {e}")))?;
        let delta = v["delta"]
            .as_f64()
            .ok_or_else(|| NormalFormError::Package("missing delta".into()))?;
        let delta_rule: DeltaRule = serde_json::from_value(v["delta_rule"].clone())
            .map_err(|e| NormalFormError::Package(format!("bad delta_rule: {e}")))?;
        let forced = v["forced_flat_cutoff"].as_bool().unwrap_or(false);
        let cutoff = if forced {
            CutoffSpec::forced_one(delta)
        } else {
            CutoffSpec::for_beta(delta, beta)?
        };

        let h2 = quadratic_energy(n);
        let h4 = poly_from_json(&v["h4"], n, "h4")?;
        let h6 = poly_from_json(&v["h6"], n, "h6")?;
        let z4 = poly_from_json(&v["z4"], n, "z4")?;
        let chi4 = poly_from_json(&v["chi4"], n, "chi4")?;
        let z6 = poly_from_json(&v["z6"], n, "z6")?;
        let chi6 = poly_from_json(&v["chi6"], n, "chi6")?;
        let phi_k2 = poly_from_json(&v["phi_k2"], n, "phi_k2")?;
        let phi_k4 = poly_from_json(&v["phi_k4"], n, "phi_k4")?;
        let phi_k6 = poly_from_json(&v["phi_k6"], n, "phi_k6")?;
        let r6 = poly_from_json(&v["r6"], n, "r6")?;
        let (_, h4_range) = kernel_range_split(&h4);
        let g_range = lh2_apply(&chi6).scaled(Complex64::new(-1.0, 0.0));
        let tilde_phi6 = modulated_from_json(&v["tilde_phi6"], n, "tilde_phi6")?;
        let correction = modulated_from_json(&v["correction"], n, "correction")?;

        let base = NormalFormBase {
            params,
            tk,
            h2,
            h4,
            h6,
            z4,
            chi4,
            h4_range,
            z6,
            chi6,
            g_range,
            phi_k2: phi_k2.clone(),
            phi_k4: phi_k4.clone(),
            phi_k6: phi_k6.clone(),
            r6,
        };
        let r6_nr = ModulatedPolynomial::from_self_anchored(&base.r6, ModulationTag::Rho);
        let r6_r = ModulatedPolynomial::from_self_anchored(&base.r6, ModulationTag::OneMinusRho);
        let mut phi6_total = ModulatedPolynomial::new(n);
        for plain in [&phi_k2, &phi_k4, &phi_k6] {
            for (m, c) in plain.terms() {
                phi6_total.add_term(m.clone(), [0; 6], ModulationTag::One, c);
            }
        }
        phi6_total.add_assign_scaled(&tilde_phi6, Complex64::ONE);
        phi6_total.add_assign_scaled(&correction, Complex64::ONE);
        phi6_total.set_admissibility(Some(Admissibility { m: 4, tk }));
        Ok(NormalFormPackage {
            base,
            cutoff,
            delta_rule,
            r6_nr,
            r6_r,
            tilde_phi6,
            correction,
            phi6_total,
        })
    }
}
