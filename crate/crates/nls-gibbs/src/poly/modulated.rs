//! Polynomials whose coefficients are modulated by a smooth function of a
//! signed action sum.
//!
//! Each term carries an anchor: six indices (three with weight +1, three with
//! weight −1) defining the quadratic form a(ψ) = Σ₊|ψₖ|² − Σ₋|ψₖ|². The term
//! evaluates to coeff · w(a) · ψ-monomial, where the weight w is selected by a
//! [`ModulationTag`] from a closed family built out of the cutoff ρ: 1, ρ(a/δ),
//! 1 − ρ(a/δ), ρ(a/δ)/a, and the a-derivatives of the last three. The family
//! is closed under the one construction that needs it symbolically: the
//! Poisson bracket of a plain polynomial against a modulated one splits into a
//! tag-preserving part and a derivative-tag part ([`bracket_plain_modulated`]).
//! Brackets of two modulated polynomials never arise and are not implemented.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cutoff::CutoffSpec;
use super::{poisson_bracket, Admissibility, Monomial, PolyError, SparsePolynomial};
use crate::state::FourierState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationTag {
    One,
    Rho,
    OneMinusRho,
    RhoOverA,
    DRho,
    DRhoOverA,
}

impl ModulationTag {
    /// Weight value and its a-derivative at a.
    ///
    /// The /a tags extend smoothly by zero through a = 0 because ρ vanishes
    /// identically on |a| ≤ δ.
    pub fn weight_jet(self, cutoff: &CutoffSpec, a: f64) -> (f64, f64) {
        match self {
            ModulationTag::One => (1.0, 0.0),
            ModulationTag::Rho => (cutoff.rho(a), cutoff.drho(a)),
            ModulationTag::OneMinusRho => (1.0 - cutoff.rho(a), -cutoff.drho(a)),
            ModulationTag::RhoOverA => {
                let r = cutoff.rho(a);
                let dr = cutoff.drho(a);
                if r == 0.0 && dr == 0.0 {
                    (0.0, 0.0)
                } else {
                    (r / a, dr / a - r / (a * a))
                }
            }
            ModulationTag::DRho => (cutoff.drho(a), cutoff.ddrho(a)),
            ModulationTag::DRhoOverA => {
                let r = cutoff.rho(a);
                let dr = cutoff.drho(a);
                let ddr = cutoff.ddrho(a);
                if r == 0.0 && dr == 0.0 && ddr == 0.0 {
                    (0.0, 0.0)
                } else {
                    (
                        dr / a - r / (a * a),
                        ddr / a - 2.0 * dr / (a * a) + 2.0 * r / (a * a * a),
                    )
                }
            }
        }
    }

    pub fn weight(self, cutoff: &CutoffSpec, a: f64) -> f64 {
        self.weight_jet(cutoff, a).0
    }

    /// Tag of the a-derivative together with a sign folded into coefficients.
    /// None means the derivative vanishes identically.
    fn derivative(self) -> Option<(ModulationTag, f64)> {
        match self {
            ModulationTag::One => None,
            ModulationTag::Rho => Some((ModulationTag::DRho, 1.0)),
            ModulationTag::OneMinusRho => Some((ModulationTag::DRho, -1.0)),
            ModulationTag::RhoOverA => Some((ModulationTag::DRhoOverA, 1.0)),
            ModulationTag::DRho | ModulationTag::DRhoOverA => {
                unreachable!("second-derivative tags do not enter symbolic brackets")
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationTag::One => "one",
            ModulationTag::Rho => "rho",
            ModulationTag::OneMinusRho => "one_minus_rho",
            ModulationTag::RhoOverA => "rho_over_a",
            ModulationTag::DRho => "drho",
            ModulationTag::DRhoOverA => "drho_over_a",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "one" => ModulationTag::One,
            "rho" => ModulationTag::Rho,
            "one_minus_rho" => ModulationTag::OneMinusRho,
            "rho_over_a" => ModulationTag::RhoOverA,
            "drho" => ModulationTag::DRho,
            "drho_over_a" => ModulationTag::DRhoOverA,
            _ => return None,
        })
    }
}

/// Anchor of the modulation argument: indices 0..3 carry weight +1, 3..6
/// weight −1, repeats accumulate.
pub type Anchor = [i32; 6];

pub fn anchor_of(monomial: &Monomial) -> Anchor {
    assert_eq!(monomial.degree(), 6, "anchors come from degree-6 monomials");
    let h = monomial.holo();
    let a = monomial.anti();
    [h[0], h[1], h[2], a[0], a[1], a[2]]
}

/// a(ψ) = Σ₊|ψₖ|² − Σ₋|ψₖ|² for the anchor.
pub fn anchor_value(anchor: &Anchor, state: &FourierState) -> f64 {
    let mut a = 0.0;
    for (i, &k) in anchor.iter().enumerate() {
        let sq = state.mode(k).norm_sqr();
        if i < 3 {
            a += sq;
        } else {
            a -= sq;
        }
    }
    a
}

/// Signed multiplicity of l in the anchor: ∂a/∂ψ̄_l = σ(l)·ψ_l.
fn anchor_weight(anchor: &Anchor, l: i32) -> i32 {
    let mut sigma = 0;
    for (i, &k) in anchor.iter().enumerate() {
        if k == l {
            sigma += if i < 3 { 1 } else { -1 };
        }
    }
    sigma
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct TermKey {
    monomial: Monomial,
    anchor: Anchor,
    tag: ModulationTag,
}

/// Sum of modulated terms; not necessarily homogeneous in degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedPolynomial {
    n_trunc: i32,
    terms: BTreeMap<TermKey, Complex64>,
    admissibility: Option<Admissibility>,
}

impl ModulatedPolynomial {
    pub fn new(n_trunc: i32) -> Self {
        ModulatedPolynomial { n_trunc, terms: BTreeMap::new(), admissibility: None }
    }

    /// Wraps each term of a degree-6 polynomial with the given tag, anchored
    /// at the term's own index lists.
    pub fn from_self_anchored(poly: &SparsePolynomial, tag: ModulationTag) -> Self {
        let mut out = ModulatedPolynomial::new(poly.truncation());
        for (m, c) in poly.terms() {
            let anchor = anchor_of(m);
            out.add_term(m.clone(), anchor, tag, c);
        }
        out.admissibility = poly.admissibility();
        out
    }

    pub fn truncation(&self) -> i32 {
        self.n_trunc
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn admissibility(&self) -> Option<Admissibility> {
        self.admissibility
    }

    pub fn set_admissibility(&mut self, tag: Option<Admissibility>) {
        self.admissibility = tag;
    }

    pub fn add_term(&mut self, monomial: Monomial, anchor: Anchor, tag: ModulationTag, coeff: Complex64) {
        if coeff == Complex64::ZERO {
            return;
        }
        let key = TermKey { monomial, anchor, tag };
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                *slot.get_mut() += coeff;
                if *slot.get() == Complex64::ZERO {
                    slot.remove();
                }
            }
        }
    }

    pub fn add_assign_scaled(&mut self, other: &ModulatedPolynomial, factor: Complex64) {
        for (key, &c) in &other.terms {
            self.add_term(key.monomial.clone(), key.anchor, key.tag, c * factor);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Anchor, ModulationTag, Complex64)> {
        self.terms.iter().map(|(k, &c)| (&k.monomial, &k.anchor, k.tag, c))
    }

    /// Largest raw coefficient modulus, modulation weights not included.
    pub fn sup_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(|k| k.monomial.degree()).max().unwrap_or(0)
    }

    pub fn evaluate(&self, cutoff: &CutoffSpec, state: &FourierState) -> Complex64 {
        assert!(state.truncation() >= self.n_trunc);
        let mut out = Complex64::ZERO;
        for (key, &c) in &self.terms {
            let a = anchor_value(&key.anchor, state);
            let w = key.tag.weight(cutoff, a);
            if w == 0.0 {
                continue;
            }
            out += c * w * key.monomial.evaluate(state);
        }
        out
    }

    /// Per-mode derivatives (∂f/∂ψₖ, ∂f/∂ψ̄ₖ), including the chain-rule terms
    /// through the modulation argument.
    pub fn gradient(
        &self,
        cutoff: &CutoffSpec,
        state: &FourierState,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = state.truncation();
        let len = 2 * n as usize + 1;
        let mut d_holo = vec![Complex64::ZERO; len];
        let mut d_anti = vec![Complex64::ZERO; len];
        let mut factors: Vec<Complex64> = Vec::with_capacity(16);
        for (key, &c) in &self.terms {
            let a = anchor_value(&key.anchor, state);
            let (w, dw) = key.tag.weight_jet(cutoff, a);
            if w == 0.0 && dw == 0.0 {
                continue;
            }
            let m = &key.monomial;
            factors.clear();
            for &k in m.holo() {
                factors.push(state.mode(k));
            }
            for &k in m.anti() {
                factors.push(state.mode(k).conj());
            }
            let deg = factors.len();
            let mut prefix = vec![Complex64::ONE; deg + 1];
            for i in 0..deg {
                prefix[i + 1] = prefix[i] * factors[i];
            }
            let mut suffix = vec![Complex64::ONE; deg + 1];
            for i in (0..deg).rev() {
                suffix[i] = suffix[i + 1] * factors[i];
            }
            let full = prefix[deg];
            if w != 0.0 {
                let cw = c * w;
                let nh = m.holo().len();
                for (i, &k) in m.holo().iter().enumerate() {
                    d_holo[(k + n) as usize] += cw * prefix[i] * suffix[i + 1];
                }
                for (i, &k) in m.anti().iter().enumerate() {
                    let pos = nh + i;
                    d_anti[(k + n) as usize] += cw * prefix[pos] * suffix[pos + 1];
                }
            }
            if dw != 0.0 {
                let cdw = c * dw * full;
                let mut seen = [i32::MIN; 6];
                for (slot, &l) in key.anchor.iter().enumerate() {
                    if seen[..slot].contains(&l) {
                        continue;
                    }
                    seen[slot] = l;
                    let sigma = anchor_weight(&key.anchor, l) as f64;
                    if sigma == 0.0 {
                        continue;
                    }
                    // ∂a/∂ψ̄_l = σψ_l, ∂a/∂ψ_l = σψ̄_l
                    d_anti[(l + n) as usize] += cdw * sigma * state.mode(l);
                    d_holo[(l + n) as usize] += cdw * sigma * state.mode(l).conj();
                }
            }
        }
        (d_holo, d_anti)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (key, c) in &self.terms {
            let line = serde_json::json!({
                "holo": key.monomial.holo(),
                "anti": key.monomial.anti(),
                "re": c.re,
                "im": c.im,
                "tag": key.tag.name(),
                "anchor": key.anchor,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, n_trunc: i32) -> Result<Self, PolyError> {
        let mut out = ModulatedPolynomial::new(n_trunc);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| PolyError::Parse(e.to_string()))?;
            let holo = super::index_list(&v["holo"]).ok_or_else(|| PolyError::Parse(line.into()))?;
            let anti = super::index_list(&v["anti"]).ok_or_else(|| PolyError::Parse(line.into()))?;
            let re = v["re"].as_f64().ok_or_else(|| PolyError::Parse(line.into()))?;
            let im = v["im"].as_f64().ok_or_else(|| PolyError::Parse(line.into()))?;
            let tag = v["tag"]
                .as_str()
                .and_then(ModulationTag::from_name)
                .ok_or_else(|| PolyError::Parse(line.into()))?;
            let anchor_list =
                super::index_list(&v["anchor"]).ok_or_else(|| PolyError::Parse(line.into()))?;
            if anchor_list.len() != 6 {
                return Err(PolyError::Parse(line.into()));
            }
            let mut anchor = [0i32; 6];
            anchor.copy_from_slice(&anchor_list);
            out.add_term(Monomial::new(holo, anti), anchor, tag, Complex64::new(re, im));
        }
        Ok(out)
    }
}

fn monomial_product(a: &Monomial, b: &Monomial) -> Monomial {
    Monomial::new(
        a.holo().iter().chain(b.holo()).copied().collect(),
        a.anti().iter().chain(b.anti()).copied().collect(),
    )
}

/// {p, t} for plain p and modulated t. Writing a term of t as c·w(a)·m,
///
/// ```text
/// {p, c·w(a)·m} = c·w(a)·{p, m} + c·w′(a)·{p, a}·m,
/// ```
///
/// so the first part keeps the tag and the second moves to the derivative tag
/// with the anchor unchanged. Anchors pass through both parts untouched.
pub fn bracket_plain_modulated(
    p: &SparsePolynomial,
    t: &ModulatedPolynomial,
) -> Result<ModulatedPolynomial, PolyError> {
    if p.truncation() != t.truncation() {
        return Err(PolyError::MixedTruncation(p.truncation(), t.truncation()));
    }
    let mut out = ModulatedPolynomial::new(p.truncation());
    let mut action_brackets: BTreeMap<i32, SparsePolynomial> = BTreeMap::new();
    for (key, &c) in &t.terms {
        let mut single = SparsePolynomial::new(key.monomial.degree(), p.truncation());
        single.add_term(key.monomial.clone(), Complex64::ONE);
        let f1 = poisson_bracket(p, &single)?;
        for (m, c1) in f1.terms() {
            out.add_term(m.clone(), key.anchor, key.tag, c * c1);
        }
        if let Some((dtag, sign)) = key.tag.derivative() {
            let mut seen = [i32::MIN; 6];
            for (slot, &l) in key.anchor.iter().enumerate() {
                if seen[..slot].contains(&l) {
                    continue;
                }
                seen[slot] = l;
                let sigma = anchor_weight(&key.anchor, l);
                if sigma == 0 {
                    continue;
                }
                if !action_brackets.contains_key(&l) {
                    let action = SparsePolynomial::action(l, p.truncation());
                    action_brackets.insert(l, poisson_bracket(p, &action)?);
                }
                for (m, c2) in action_brackets[&l].terms() {
                    out.add_term(
                        monomial_product(m, &key.monomial),
                        key.anchor,
                        dtag,
                        c * c2 * sign * sigma as f64,
                    );
                }
            }
        }
    }
    out.set_admissibility(match (p.admissibility(), t.admissibility()) {
        (None, Some(tag)) => Some(Admissibility { m: 2 * tag.m, tk: tag.tk }),
        _ => None,
    });
    Ok(out)
}
