//! Sparse algebra of Fourier-indexed polynomials in (ψ, ψ̄).
//!
//! A [`Monomial`] is a pair of sorted index lists (k₁..kₙ | kₙ₊₁..k₂ₙ) for the
//! product ψ_{k₁}···ψ_{kₙ}·ψ̄_{kₙ₊₁}···ψ̄_{k₂ₙ}, subject to the zero-momentum
//! constraint Σ holo = Σ anti. A [`SparsePolynomial`] maps canonical monomials
//! to complex coefficients; multiplicities of equivalent orderings are folded
//! into coefficients.
//!
//! The Poisson bracket convention is
//!
//! ```text
//! {f, g} = +i Σₖ (∂f/∂ψₖ ∂g/∂ψ̄ₖ − ∂g/∂ψₖ ∂f/∂ψ̄ₖ),
//! ```
//!
//! so d/dt f = {H, f} along i ψ̇ₖ = ∂H/∂ψ̄ₖ, and the commutator with the
//! quadratic energy Σₖ k²|ψₖ|² acts diagonally: each monomial is multiplied
//! by −i·(Σ holo k² − Σ anti k²). That diagonal action ([`lh2_apply`]), its
//! kernel/range split and its inverse on the range are the building blocks of
//! the normal-form construction.

pub mod cutoff;
pub mod modulated;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::FourierState;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("mixed truncations: {0} vs {1}")]
    MixedTruncation(i32, i32),
    #[error("monomial {0} violates zero momentum")]
    MomentumViolation(Monomial),
    #[error("kernel monomial {0} present in a range-only operation")]
    KernelMonomial(Monomial),
    #[error("degree mismatch: polynomial of degree {expected} cannot hold monomial of degree {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("malformed polynomial line: {0}")]
    Parse(String),
}

/// Canonical zero-momentum monomial: both index lists sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    holo: Vec<i32>,
    anti: Vec<i32>,
}

impl Monomial {
    pub fn new(mut holo: Vec<i32>, mut anti: Vec<i32>) -> Self {
        holo.sort_unstable();
        anti.sort_unstable();
        Monomial { holo, anti }
    }

    pub fn action(k: i32) -> Self {
        Monomial { holo: vec![k], anti: vec![k] }
    }

    pub fn holo(&self) -> &[i32] {
        &self.holo
    }

    pub fn anti(&self) -> &[i32] {
        &self.anti
    }

    pub fn degree(&self) -> usize {
        self.holo.len() + self.anti.len()
    }

    pub fn momentum_gap(&self) -> i64 {
        let h: i64 = self.holo.iter().map(|&k| k as i64).sum();
        let a: i64 = self.anti.iter().map(|&k| k as i64).sum();
        h - a
    }

    pub fn is_zero_momentum(&self) -> bool {
        self.momentum_gap() == 0
    }

    /// Σ holo k² − Σ anti k²; the monomial is resonant iff this vanishes.
    pub fn squared_gap(&self) -> i64 {
        let h: i64 = self.holo.iter().map(|&k| (k as i64) * (k as i64)).sum();
        let a: i64 = self.anti.iter().map(|&k| (k as i64) * (k as i64)).sum();
        h - a
    }

    pub fn is_resonant(&self) -> bool {
        self.squared_gap() == 0
    }

    /// Multiset equality of the two halves; such monomials are functions of
    /// the actions only.
    pub fn is_action_monomial(&self) -> bool {
        self.holo == self.anti
    }

    pub fn max_index(&self) -> i32 {
        self.holo
            .iter()
            .chain(self.anti.iter())
            .map(|k| k.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn holo_multiplicity(&self, k: i32) -> usize {
        self.holo.iter().filter(|&&x| x == k).count()
    }

    pub fn anti_multiplicity(&self, k: i32) -> usize {
        self.anti.iter().filter(|&&x| x == k).count()
    }

    pub fn conjugate(&self) -> Self {
        Monomial { holo: self.anti.clone(), anti: self.holo.clone() }
    }

    pub fn evaluate(&self, state: &FourierState) -> Complex64 {
        let mut out = Complex64::ONE;
        for &k in &self.holo {
            out *= state.mode(k);
        }
        for &k in &self.anti {
            out *= state.mode(k).conj();
        }
        out
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_list = |xs: &[i32]| {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        write!(f, "({}|{})", fmt_list(&self.holo), fmt_list(&self.anti))
    }
}

fn merged_sorted(a: &[i32], b: &[i32]) -> Vec<i32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn without_one(xs: &[i32], k: i32) -> Vec<i32> {
    let mut out = Vec::with_capacity(xs.len() - 1);
    let mut removed = false;
    for &x in xs {
        if !removed && x == k {
            removed = true;
        } else {
            out.push(x);
        }
    }
    out
}

fn distinct(xs: &[i32]) -> impl Iterator<Item = i32> + '_ {
    xs.iter()
        .enumerate()
        .filter(|(i, &x)| *i == 0 || xs[*i - 1] != x)
        .map(|(_, &x)| x)
}

/// Mode-localization metadata: every monomial of the tagged polynomial admits
/// an integer combination Σᵢ λᵢ kᵢ = tk over its signed index list (holo
/// positive, anti negative) with |λᵢ| ≤ m. Brackets with untagged
/// zero-momentum polynomials double m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    pub m: u32,
    pub tk: i32,
}

/// Homogeneous sparse polynomial over monomials with indices |k| ≤ n_trunc.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePolynomial {
    degree: usize,
    n_trunc: i32,
    terms: BTreeMap<Monomial, Complex64>,
    admissibility: Option<Admissibility>,
}

impl SparsePolynomial {
    pub fn new(degree: usize, n_trunc: i32) -> Self {
        SparsePolynomial { degree, n_trunc, terms: BTreeMap::new(), admissibility: None }
    }

    /// The action |ψₖ|² as a polynomial, tagged (1, k)-admissible.
    pub fn action(k: i32, n_trunc: i32) -> Self {
        let mut poly = SparsePolynomial::new(2, n_trunc);
        poly.add_term(Monomial::action(k), Complex64::ONE);
        poly.admissibility = Some(Admissibility { m: 1, tk: k });
        poly
    }

    pub fn degree(&self) -> usize {
        self.degree
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

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, Complex64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, monomial: &Monomial) -> Complex64 {
        self.terms.get(monomial).copied().unwrap_or(Complex64::ZERO)
    }

    /// Adds into the coefficient of a canonical monomial, dropping the entry
    /// when it cancels to exactly zero.
    pub fn add_term(&mut self, monomial: Monomial, coeff: Complex64) {
        debug_assert_eq!(monomial.degree(), self.degree, "degree mismatch on insert");
        debug_assert!(monomial.max_index() <= self.n_trunc.abs());
        if coeff == Complex64::ZERO {
            return;
        }
        match self.terms.entry(monomial) {
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

    pub fn add_assign_scaled(&mut self, other: &SparsePolynomial, factor: Complex64) {
        assert_eq!(self.degree, other.degree, "degree mismatch in sum");
        for (m, c) in other.terms() {
            self.add_term(m.clone(), c * factor);
        }
    }

    pub fn plus(&self, other: &SparsePolynomial) -> SparsePolynomial {
        let mut out = self.clone();
        out.add_assign_scaled(other, Complex64::ONE);
        out.admissibility = combine_tags(self.admissibility, other.admissibility);
        out
    }

    pub fn scaled(&self, factor: Complex64) -> SparsePolynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= factor;
        }
        out
    }

    /// Removes coefficients of modulus at most eps.
    pub fn compress(&mut self, eps: f64) {
        self.terms.retain(|_, c| c.norm_sqr() > eps * eps);
    }

    /// Largest coefficient modulus; zero for the empty polynomial.
    pub fn sup_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn evaluate(&self, state: &FourierState) -> Complex64 {
        assert!(
            state.truncation() >= self.n_trunc,
            "state truncation {} below polynomial truncation {}",
            state.truncation(),
            self.n_trunc
        );
        let mut out = Complex64::ZERO;
        for (m, c) in self.terms() {
            out += c * m.evaluate(state);
        }
        out
    }

    /// Per-mode derivatives (∂f/∂ψₖ, ∂f/∂ψ̄ₖ) at a state, indexed k + n where
    /// n is the state truncation.
    pub fn gradient(&self, state: &FourierState) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = state.truncation();
        let len = 2 * n as usize + 1;
        let mut d_holo = vec![Complex64::ZERO; len];
        let mut d_anti = vec![Complex64::ZERO; len];
        let mut factors = Vec::with_capacity(16);
        for (m, c) in self.terms() {
            factors.clear();
            for &k in m.holo() {
                factors.push(state.mode(k));
            }
            for &k in m.anti() {
                factors.push(state.mode(k).conj());
            }
            let deg = factors.len();
            // prefix[i] = product of factors[..i], suffix[i] = product of factors[i..]
            let mut prefix = vec![Complex64::ONE; deg + 1];
            for i in 0..deg {
                prefix[i + 1] = prefix[i] * factors[i];
            }
            let mut suffix = vec![Complex64::ONE; deg + 1];
            for i in (0..deg).rev() {
                suffix[i] = suffix[i + 1] * factors[i];
            }
            let nh = m.holo().len();
            for (i, &k) in m.holo().iter().enumerate() {
                d_holo[(k + n) as usize] += c * prefix[i] * suffix[i + 1];
            }
            for (i, &k) in m.anti().iter().enumerate() {
                let pos = nh + i;
                d_anti[(k + n) as usize] += c * prefix[pos] * suffix[pos + 1];
            }
        }
        (d_holo, d_anti)
    }

    /// Serializes terms as JSON lines {"holo": [..], "anti": [..], "re": .., "im": .., "tag": "one"}.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (m, c) in self.terms() {
            let line = serde_json::json!({
                "holo": m.holo(),
                "anti": m.anti(),
                "re": c.re,
                "im": c.im,
                "tag": "one",
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, degree: usize, n_trunc: i32) -> Result<Self, PolyError> {
        let mut poly = SparsePolynomial::new(degree, n_trunc);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| PolyError::Parse(e.to_string()))?;
            let holo = index_list(&v["holo"]).ok_or_else(|| PolyError::Parse(line.into()))?;
            let anti = index_list(&v["anti"]).ok_or_else(|| PolyError::Parse(line.into()))?;
            let re = v["re"].as_f64().ok_or_else(|| PolyError::Parse(line.into()))?;
            let im = v["im"].as_f64().ok_or_else(|| PolyError::Parse(line.into()))?;
            let m = Monomial::new(holo, anti);
            if m.degree() != degree {
                return Err(PolyError::DegreeMismatch { expected: degree, got: m.degree() });
            }
            poly.add_term(m, Complex64::new(re, im));
        }
        Ok(poly)
    }
}

fn index_list(v: &serde_json::Value) -> Option<Vec<i32>> {
    v.as_array()?
        .iter()
        .map(|x| x.as_i64().map(|i| i as i32))
        .collect()
}

fn combine_tags(a: Option<Admissibility>, b: Option<Admissibility>) -> Option<Admissibility> {
    match (a, b) {
        (Some(x), Some(y)) if x.tk == y.tk => {
            Some(Admissibility { m: x.m.max(y.m), tk: x.tk })
        }
        _ => None,
    }
}

/// {f, g} = +i Σₖ (∂f/∂ψₖ ∂g/∂ψ̄ₖ − ∂g/∂ψₖ ∂f/∂ψ̄ₖ).
///
/// The result has degree deg f + deg g − 2, satisfies zero momentum term by
/// term (hard assertion), and carries a doubled admissibility bound when
/// exactly one operand is tagged.
pub fn poisson_bracket(
    f: &SparsePolynomial,
    g: &SparsePolynomial,
) -> Result<SparsePolynomial, PolyError> {
    if f.truncation() != g.truncation() {
        return Err(PolyError::MixedTruncation(f.truncation(), g.truncation()));
    }
    let degree = (f.degree() + g.degree()).saturating_sub(2);
    let mut out = SparsePolynomial::new(degree, f.truncation());
    let i = Complex64::new(0.0, 1.0);
    for (m1, c1) in f.terms() {
        for (m2, c2) in g.terms() {
            let c12 = i * c1 * c2;
            for k in distinct(m1.holo()) {
                let mult2 = m2.anti_multiplicity(k);
                if mult2 == 0 {
                    continue;
                }
                let mult1 = m1.holo_multiplicity(k);
                let mono = Monomial {
                    holo: merged_sorted(&without_one(m1.holo(), k), m2.holo()),
                    anti: merged_sorted(m1.anti(), &without_one(m2.anti(), k)),
                };
                assert!(mono.is_zero_momentum(), "bracket output {mono} violates zero momentum");
                out.add_term(mono, c12 * (mult1 * mult2) as f64);
            }
            for k in distinct(m2.holo()) {
                let mult1 = m1.anti_multiplicity(k);
                if mult1 == 0 {
                    continue;
                }
                let mult2 = m2.holo_multiplicity(k);
                let mono = Monomial {
                    holo: merged_sorted(&without_one(m2.holo(), k), m1.holo()),
                    anti: merged_sorted(m2.anti(), &without_one(m1.anti(), k)),
                };
                assert!(mono.is_zero_momentum(), "bracket output {mono} violates zero momentum");
                out.add_term(mono, -c12 * (mult2 * mult1) as f64);
            }
        }
    }
    out.set_admissibility(match (f.admissibility(), g.admissibility()) {
        (Some(tag), None) | (None, Some(tag)) => Some(Admissibility { m: 2 * tag.m, tk: tag.tk }),
        _ => None,
    });
    Ok(out)
}

/// Value of {f, g} at a state from precomputed per-mode gradients
/// (∂/∂ψₖ, ∂/∂ψ̄ₖ) of each factor.
pub fn bracket_value(
    df: &(Vec<Complex64>, Vec<Complex64>),
    dg: &(Vec<Complex64>, Vec<Complex64>),
) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::ZERO;
    for k in 0..df.0.len() {
        acc += df.0[k] * dg.1[k] - dg.0[k] * df.1[k];
    }
    i * acc
}

/// Commutator with the quadratic energy Σₖ k²|ψₖ|²: multiplies each monomial
/// by −i·(Σ holo k² − Σ anti k²). Resonant monomials are annihilated.
pub fn lh2_apply(f: &SparsePolynomial) -> SparsePolynomial {
    let mut out = SparsePolynomial::new(f.degree(), f.truncation());
    for (m, c) in f.terms() {
        let gap = m.squared_gap();
        if gap != 0 {
            out.add_term(m.clone(), c * Complex64::new(0.0, -(gap as f64)));
        }
    }
    out.set_admissibility(f.admissibility());
    out
}

/// Splits f into its resonant (kernel) and nonresonant (range) parts; the two
/// share no monomial and sum back to f exactly.
pub fn kernel_range_split(f: &SparsePolynomial) -> (SparsePolynomial, SparsePolynomial) {
    let mut kernel = SparsePolynomial::new(f.degree(), f.truncation());
    let mut range = SparsePolynomial::new(f.degree(), f.truncation());
    for (m, c) in f.terms() {
        if m.is_resonant() {
            kernel.add_term(m.clone(), c);
        } else {
            range.add_term(m.clone(), c);
        }
    }
    kernel.set_admissibility(f.admissibility());
    range.set_admissibility(f.admissibility());
    (kernel, range)
}

/// Inverse of [`lh2_apply`] on range polynomials: divides each coefficient by
/// −i·(squared gap). Errors on the first resonant monomial encountered.
pub fn lh2_invert(f: &SparsePolynomial) -> Result<SparsePolynomial, PolyError> {
    let mut out = SparsePolynomial::new(f.degree(), f.truncation());
    for (m, c) in f.terms() {
        let gap = m.squared_gap();
        if gap == 0 {
            return Err(PolyError::KernelMonomial(m.clone()));
        }
        out.add_term(m.clone(), c / Complex64::new(0.0, -(gap as f64)));
    }
    out.set_admissibility(f.admissibility());
    Ok(out)
}
