//! Frozen expected values for the normal-form chain, computed with an
//! independent reference implementation (tools/oracle_nf.py) and pinned here.

use nls_gibbs::normal_form::{
    build, build_base, build_h2j, quadratic_energy, z4_closed_form, DeltaRule,
};
use nls_gibbs::poly::{lh2_apply, Monomial, SparsePolynomial};
use nls_gibbs::state::{interaction_energy, ModelParams, TWO_PI};
use nls_gibbs::Complex64;

fn quartic(n: i32) -> ModelParams {
    ModelParams::new(2, vec![1.0], 1.0, n).unwrap()
}

fn read_golden(name: &str, degree: usize, n: i32) -> SparsePolynomial {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    SparsePolynomial::from_jsonl(&text, degree, n).unwrap()
}

fn assert_poly_close(got: &SparsePolynomial, want: &SparsePolynomial, tol: f64) {
    let mut diff = got.clone();
    diff.add_assign_scaled(want, Complex64::new(-1.0, 0.0));
    assert!(
        diff.sup_norm() <= tol,
        "largest coefficient difference {} exceeds {tol}",
        diff.sup_norm()
    );
    assert_eq!(got.len(), want.len(), "term count mismatch");
}

#[test]
fn h4_term_count_and_quadrature_value() {
    let params = quartic(2);
    let h4 = build_h2j(&params, 2).unwrap();
    assert_eq!(h4.len(), 29);

    // Independent value route: the degree-4 interaction energy computed on the
    // spatial grid equals the monomial sum.
    let state = nls_gibbs::gibbs::sample_gaussian(&params, 7, 0, 1).pop().unwrap();
    let grid_value = interaction_energy(&state, &params);
    let poly_value = h4.evaluate(&state);
    assert!(poly_value.im.abs() < 1e-12);
    assert!(
        (grid_value - poly_value.re).abs() <= 1e-10 * (1.0 + grid_value.abs()),
        "grid {grid_value} vs monomial {poly_value}"
    );
}

#[test]
fn h6_matches_quadrature() {
    let params = ModelParams::new(3, vec![1.0, 0.25], 1.0, 3).unwrap();
    let h4 = build_h2j(&params, 2).unwrap();
    let h6 = build_h2j(&params, 3).unwrap();
    let state = nls_gibbs::gibbs::sample_gaussian(&params, 11, 0, 1).pop().unwrap();
    let grid_value = interaction_energy(&state, &params);
    let poly_value = (h4.evaluate(&state) + h6.evaluate(&state)).re;
    assert!((grid_value - poly_value).abs() <= 1e-10 * (1.0 + grid_value.abs()));
}

#[test]
fn z4_matches_golden_and_closed_form() {
    let params = quartic(4);
    let base = build_base(&params, 0).unwrap();
    let golden = read_golden("z4_n4.jsonl", 4, 4);
    assert_eq!(base.z4.len(), 45);
    assert_poly_close(&base.z4, &golden, 1e-12);
    assert_poly_close(&base.z4, &z4_closed_form(&params), 1e-12);
    assert!((base.z4.sup_norm() - 1.0 / TWO_PI).abs() < 1e-15);
}

#[test]
fn z6_matches_golden() {
    let params = quartic(4);
    let base = build_base(&params, 0).unwrap();
    let golden = read_golden("z6_n4.jsonl", 6, 4);
    assert_eq!(base.z6.len(), 116);
    assert_poly_close(&base.z6, &golden, 1e-12);

    let probe = Monomial::new(vec![-3, 1, 2], vec![-2, -1, 3]);
    let c = base.z6.coefficient(&probe);
    assert!((c.re - 0.002110857992548704).abs() < 1e-15);
    assert!(c.im.abs() < 1e-18);
}

#[test]
fn r6_at_n4_mode1() {
    let params = quartic(4);
    let base = build_base(&params, 1).unwrap();
    assert_eq!(base.r6.len(), 8);
    let probe = Monomial::new(vec![-3, 1, 2], vec![-2, -1, 3]);
    let c = base.r6.coefficient(&probe);
    assert!((c.im - (-0.002110857992548704)).abs() < 1e-15);
    assert!(c.re.abs() < 1e-18);
}

#[test]
fn r6_empty_at_n1() {
    let params = quartic(1);
    for tk in -1..=1 {
        let base = build_base(&params, tk).unwrap();
        assert!(base.r6.is_empty(), "tk={tk}");
    }
}

#[test]
fn z6_and_r6_at_n8() {
    let params = quartic(8);
    let base0 = build_base(&params, 0).unwrap();
    assert_eq!(base0.z6.len(), 846);
    assert!((base0.z6.sup_norm() - 0.0063325739776461127).abs() < 1e-15);
    let probe = Monomial::new(vec![1, 5, 6], vec![2, 3, 7]);
    assert!((base0.z6.coefficient(&probe).re - 0.0010554289962743523).abs() < 1e-15);
    assert_eq!(base0.r6.len(), 56);

    let base1 = build_base(&params, 1).unwrap();
    assert_eq!(base1.r6.len(), 62);
    let base3 = build_base(&params, 3).unwrap();
    assert_eq!(base3.r6.len(), 56);
}

#[test]
fn homological_identities_coefficientwise() {
    let params = quartic(4);
    let base = build_base(&params, 1).unwrap();
    let mut hom = lh2_apply(&base.chi4);
    hom.add_assign_scaled(&base.h4_range, Complex64::ONE);
    assert!(hom.sup_norm() < 1e-13);
    assert_eq!(lh2_apply(&base.z4).len(), 0);
    assert_eq!(lh2_apply(&base.z6).len(), 0);
    let mut hom6 = lh2_apply(&base.chi6);
    hom6.add_assign_scaled(&base.g_range, Complex64::ONE);
    assert!(hom6.sup_norm() < 1e-13);
}

#[test]
fn quadratic_energy_terms() {
    let h2 = quadratic_energy(3);
    assert_eq!(h2.len(), 6);
    assert_eq!(h2.coefficient(&Monomial::action(-3)).re, 9.0);
    assert_eq!(h2.coefficient(&Monomial::action(0)).re, 0.0);
}

#[test]
fn package_roundtrip_preserves_every_coefficient() {
    let params = ModelParams::new(2, vec![1.0], 4.0, 3).unwrap();
    let pkg = build(&params, 1, DeltaRule::Auto).unwrap();
    let json = pkg.to_json();
    let back = nls_gibbs::normal_form::NormalFormPackage::from_json(&json).unwrap();
    assert_poly_close(&back.base.z6, &pkg.base.z6, 0.0);
    assert_poly_close(&back.base.chi6, &pkg.base.chi6, 0.0);
    assert_poly_close(&back.base.phi_k6, &pkg.base.phi_k6, 0.0);
    assert_eq!(back.tilde_phi6.len(), pkg.tilde_phi6.len());
    assert_eq!(back.correction.len(), pkg.correction.len());
    assert_eq!(back.phi6_total.len(), pkg.phi6_total.len());
    let state = nls_gibbs::gibbs::sample_gaussian(&params, 3, 0, 1).pop().unwrap();
    assert_eq!(pkg.evaluate(&state), back.evaluate(&state));
}
