use nls_gibbs::dynamics::IntegratorConfig;
use nls_gibbs::gibbs::SampleMethod;
use nls_gibbs::harness::scaling::{delta_sweep, NormMeasure};
use nls_gibbs::harness::{
    bootstrap_median_stderr, compare_drift, corollary_all_modes, drift_csv, estimate_bad_set,
    package_at_beta, run_drift_experiment, stationarity_check, weighted_median, DriftFlag,
    ExperimentConfig, Provenance, SamplerSettings,
};
use nls_gibbs::normal_form::{build_base, DeltaRule};
use nls_gibbs::state::ModelParams;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        params: ModelParams::new(2, vec![1.0], 4.0, 4).unwrap(),
        sampler: SamplerSettings {
            seed: 7,
            // Enough for the self-normalized estimators' effective-sample
            // floor even after weighting.
            n_samples: 24,
            method: SampleMethod::ImportanceWeights,
        },
        integrator: IntegratorConfig::new(1e-3, 1.0, 50),
        tk_list: vec![0, 1],
        beta_grid: vec![4.0, 8.0],
        delta_rule: DeltaRule::Auto,
        eta1: 1.0,
        eta2: 0.5,
        horizon_scale: 0.02,
        alpha: 0.25,
        norm_samples: 200,
        nf_truncation: None,
    }
}

#[test]
fn config_toml_roundtrip() {
    let config = small_config();
    let text = toml::to_string(&config).unwrap();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back.beta_grid, config.beta_grid);
    assert_eq!(back.tk_list, config.tk_list);
    assert_eq!(back.sampler.seed, config.sampler.seed);
    assert_eq!(back.sampler.n_samples, config.sampler.n_samples);
    assert_eq!(back.eta1, config.eta1);
    assert_eq!(back.horizon_scale, config.horizon_scale);
    assert_eq!(back.params.beta, config.params.beta);
    assert_eq!(back.params.truncation(), config.params.truncation());
}

#[test]
fn config_defaults_fill_in() {
    let text = r#"
        tk_list = [1]
        beta_grid = [8.0]

        [params]
        q = 2
        c = [1.0]
        beta = 8.0
        n = 4

        [sampler]
        seed = 1
        n_samples = 10

        [integrator]
        dt = 1e-3
        t_end = 1.0
    "#;
    let config = ExperimentConfig::from_toml_str(text).unwrap();
    assert_eq!(config.eta1, 1.0);
    assert_eq!(config.eta2, 0.5);
    assert_eq!(config.alpha, 0.25);
    assert_eq!(config.horizon_scale, 1.0);
    assert_eq!(config.norm_samples, 2000);
    assert!(matches!(config.delta_rule, DeltaRule::Auto));
    assert!(matches!(config.sampler.method, SampleMethod::ImportanceWeights));
    config.validate().unwrap();
}

#[test]
fn config_rejects_unknown_fields() {
    let text = r#"
        tk_list = [1]
        beta_grid = [8.0]
        mystery_knob = 3

        [params]
        q = 2
        c = [1.0]
        beta = 8.0
        n = 4

        [sampler]
        seed = 1
        n_samples = 10

        [integrator]
        dt = 1e-3
        t_end = 1.0
    "#;
    assert!(ExperimentConfig::from_toml_str(text).is_err());
}

#[test]
fn validation_rejects_inconsistent_configs() {
    let base = small_config();

    let mut c = base.clone();
    c.beta_grid = vec![];
    assert!(c.validate().is_err(), "empty beta grid");

    let mut c = base.clone();
    c.beta_grid = vec![8.0, 8.0];
    assert!(c.validate().is_err(), "non-increasing beta grid");

    let mut c = base.clone();
    c.beta_grid = vec![8.0, 4.0];
    assert!(c.validate().is_err(), "descending beta grid");

    let mut c = base.clone();
    c.eta1 = 0.0;
    assert!(c.validate().is_err(), "eta1 must be positive");

    let mut c = base.clone();
    c.eta1 = 1.5;
    assert!(c.validate().is_err(), "eta1 above one");

    let mut c = base.clone();
    c.alpha = 0.5;
    assert!(c.validate().is_err(), "alpha at the half");

    let mut c = base.clone();
    c.horizon_scale = 0.0;
    assert!(c.validate().is_err(), "zero horizon");

    let mut c = base.clone();
    c.tk_list = vec![];
    assert!(c.validate().is_err(), "no tracked modes");

    let mut c = base.clone();
    c.tk_list = vec![0, 5];
    assert!(c.validate().is_err(), "tracked mode outside truncation");

    let mut c = base.clone();
    c.nf_truncation = Some(7);
    assert!(c.validate().is_err(), "normal-form truncation above model truncation");

    let mut c = base.clone();
    c.beta_grid = vec![1.0, 8.0];
    assert!(c.validate().is_err(), "auto width incompatible with beta = 1");

    let mut c = base.clone();
    c.delta_rule = DeltaRule::Fixed(0.5);
    assert!(c.validate().is_err(), "fixed width violating the window at some beta");

    let mut c = base.clone();
    c.sampler.n_samples = 0;
    assert!(c.validate().is_err(), "no samples");
}

#[test]
fn horizon_and_params_rebuild() {
    let config = small_config();
    assert_eq!(config.horizon(4.0), 0.02 * 16.0);
    assert_eq!(config.horizon(8.0), 0.02 * 64.0);
    let p = config.params_at(32.0);
    assert_eq!(p.beta, 32.0);
    assert_eq!(p.truncation(), 4);
    assert_eq!(p.coefficients(), config.params.coefficients());
}

#[test]
fn provenance_line_is_stable() {
    let config = small_config();
    let p = Provenance::new(&config);
    assert_eq!(p.line(), "seed=7 n=4 dt=0.001 grid_len=32 delta_rule=auto(beta^-13/10)");
}

#[test]
fn package_rebuild_tracks_beta() {
    let params = ModelParams::new(2, vec![1.0], 8.0, 4).unwrap();
    let base = build_base(&params, 1).unwrap();
    let pkg = package_at_beta(&base, DeltaRule::Auto, 32.0).unwrap();
    let expected = 32.0f64.powf(-1.3);
    assert!((pkg.cutoff.delta() - expected).abs() <= 1e-15 * expected);
    assert_eq!(pkg.base.params.beta, 32.0);
    assert_eq!(pkg.base.tk, 1);
}

#[test]
fn weighted_median_hand_cases() {
    let zeros = vec![0.0; 3];
    assert_eq!(weighted_median(&[1.0, 2.0, 3.0], &zeros), 2.0);
    assert_eq!(weighted_median(&[3.0, 1.0, 2.0], &zeros), 2.0);
    // A dominant weight drags the median onto its value.
    let lw = vec![0.0, 0.0, 20.0];
    assert_eq!(weighted_median(&[1.0, 2.0, 3.0], &lw), 3.0);
    // Single value.
    assert_eq!(weighted_median(&[5.0], &[0.0]), 5.0);
}

#[test]
fn bootstrap_stderr_basics() {
    let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let lw = vec![0.0; 50];
    let a = bootstrap_median_stderr(&values, &lw, 11, 200);
    let b = bootstrap_median_stderr(&values, &lw, 11, 200);
    assert_eq!(a, b, "fixed seed reproduces the bootstrap");
    assert!(a > 0.0);

    let constant = vec![2.5; 50];
    assert_eq!(bootstrap_median_stderr(&constant, &lw, 3, 100), 0.0);
}

#[test]
fn drift_experiment_shape_and_determinism() {
    let config = small_config();
    let experiment = run_drift_experiment(&config).unwrap();
    assert_eq!(experiment.runs.len(), 2);
    for (run, &beta) in experiment.runs.iter().zip(&config.beta_grid) {
        assert_eq!(run.beta, beta);
        assert_eq!(run.t_horizon, config.horizon(beta));
        assert_eq!(run.records.len(), config.sampler.n_samples * config.tk_list.len());
        for r in &run.records {
            assert!(config.tk_list.contains(&r.k));
            assert_eq!(r.flag, DriftFlag::Ok);
            assert!(r.drift_i.is_finite() && r.drift_i >= 0.0);
            assert!(r.drift_phi.is_finite() && r.drift_phi >= 0.0);
            assert!(r.log_weight <= 0.0);
        }
        assert_eq!(run.nonfinite_samples, 0);
        for &k in &config.tk_list {
            assert!(run.phi_scales[&k] > 0.0);
            assert!(run.phi_dot_norms[&k] > 0.0);
        }
    }

    let again = run_drift_experiment(&config).unwrap();
    assert_eq!(drift_csv(&experiment), drift_csv(&again), "same seed, same bytes");
}

#[test]
fn drift_csv_layout() {
    let config = small_config();
    let experiment = run_drift_experiment(&config).unwrap();
    let text = drift_csv(&experiment);
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# beta=4 "));
    assert!(first.contains("delta_rule=auto(beta^-13/10)"));
    assert!(lines.next().unwrap().starts_with("# beta=8 "));
    assert_eq!(
        lines.next().unwrap(),
        "sample,k,T,drift_I_normalized,drift_phi_normalized,flags"
    );
    let data_lines = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("sample")).count();
    assert_eq!(data_lines, 2 * config.sampler.n_samples * config.tk_list.len());
}

#[test]
fn bad_set_envelope_formula_and_extremes() {
    let config = small_config();
    let experiment = run_drift_experiment(&config).unwrap();
    let run = &experiment.runs[0];

    let report = estimate_bad_set(run, 1.0);
    assert_eq!(report.eta1, 1.0);
    for mode in &report.per_mode {
        let scale = run.phi_scales[&mode.k];
        let phi_dot = run.phi_dot_norms[&mode.k];
        let expected = run.t_horizon.powi(2) * phi_dot * phi_dot / (scale * scale);
        assert!((mode.envelope - expected).abs() <= 1e-12 * expected.max(1.0));
        assert!((0.0..=1.0).contains(&mode.bad_fraction_phi));
        assert!((0.0..=1.0).contains(&mode.bad_fraction_i));
    }

    // With a loose threshold nothing is bad; the envelope only grows as the
    // threshold tightens, and in both extremes the bound holds.
    let loose = estimate_bad_set(run, 1.0);
    let tight = estimate_bad_set(run, 1e-6);
    for (a, b) in loose.per_mode.iter().zip(&tight.per_mode) {
        assert!(b.envelope >= a.envelope);
        assert!(b.bad_fraction_phi >= a.bad_fraction_phi);
    }
    assert!(tight.pass, "enormous envelope dominates a fraction of at most one");
}

#[test]
fn corollary_union_never_exceeds_sum() {
    let config = small_config();
    let experiment = run_drift_experiment(&config).unwrap();
    for run in &experiment.runs {
        for eta1 in [1e-6, 0.1, 1.0] {
            let report = corollary_all_modes(run, config.alpha, eta1, config.eta2);
            assert!(report.union_le_sum);
            assert!(report.union_fraction <= report.sum_of_fractions + 1e-15);
            assert!((0.0..=1.0).contains(&report.union_fraction));
            for mode in &report.per_mode {
                let kk = 1.0 + (mode.k as f64).powi(2);
                assert!((mode.threshold - eta1 * kk.powf(0.75)).abs() <= 1e-12);
                assert!((0.0..=1.0).contains(&mode.bad_fraction));
                assert!(mode.allowance > 0.0);
            }
            let total_allowance: f64 = report.per_mode.iter().map(|m| m.allowance).sum();
            assert!((total_allowance - config.eta2).abs() <= 1e-12);
        }
    }
}

#[test]
fn drift_comparison_shape() {
    let config = small_config();
    let experiment = run_drift_experiment(&config).unwrap();
    let comparison = compare_drift(&experiment, Some(1), 5, 100);
    assert_eq!(comparison.k, Some(1));
    assert_eq!(comparison.per_beta.len(), 2);
    assert_eq!(comparison.monotone.len(), 1);
    let pair = &comparison.monotone[0];
    assert_eq!(pair.beta_lo, 4.0);
    assert_eq!(pair.beta_hi, 8.0);
    assert!(pair.se_diff >= 0.0);
    for medians in &comparison.per_beta {
        assert!(medians.median_i >= 0.0);
        assert!(medians.median_phi >= 0.0);
        assert_eq!(medians.phi_le_i, medians.median_phi <= medians.median_i);
    }
    // Pooled-mode variant runs on the same experiment.
    let pooled = compare_drift(&experiment, None, 5, 100);
    assert_eq!(pooled.k, None);
    assert_eq!(pooled.per_beta.len(), 2);
}

#[test]
fn stationarity_of_gibbs_ensemble() {
    let mut config = small_config();
    config.sampler.n_samples = 40;
    let report = stationarity_check(&config, 1).unwrap();
    assert_eq!(report.beta, 4.0);
    assert_eq!(report.k, 1);
    assert_eq!(report.t_horizon, config.horizon(4.0));
    // The ensemble is invariant, so initial and final means agree within
    // noise; the paired test keeps z small even at modest sample counts.
    assert!(report.z <= 3.0, "z = {}", report.z);
    assert!(report.pass);
    let expected = 2.0 / (4.0 * 2.0);
    assert!((report.mean_initial.mean - expected).abs() <= 4.0 * report.mean_initial.stderr + 0.05);
}

#[test]
fn delta_sweep_orders_widths_and_reports_tension() {
    let config = small_config();
    let report = delta_sweep(&config, 1, 8.0, 120).unwrap();
    assert_eq!(report.beta, 8.0);
    assert_eq!(report.tk, 1);
    assert_eq!(report.points.len(), 4);
    for pair in report.points.windows(2) {
        assert!(pair[0].delta < pair[1].delta);
    }
    let reference = 8.0f64.powf(-1.3);
    assert!((report.reference_delta - reference).abs() <= 1e-15);
    for point in &report.points {
        assert!(point.delta * 8.0 < 1.0, "width stays inside the admissible window");
        assert!(point.resonant_norm.is_finite() && point.resonant_norm >= 0.0);
        assert!(point.tail_norm.is_finite() && point.tail_norm > 0.0);
    }
    assert!(!report.skipped_empty_resonant);
    assert!(report.ratio_at_reference.is_some());
    // Tradeoff directions: the uncut resonant remainder grows with the width
    // while the protected tail shrinks.
    let first = &report.points[0];
    let last = &report.points[report.points.len() - 1];
    assert!(last.resonant_norm > first.resonant_norm);
    assert!(first.tail_norm > last.tail_norm);
    assert!(report.pass);
}

#[test]
fn phi_dot_norms_decay_in_beta_on_a_small_grid() {
    use nls_gibbs::harness::scaling::verify_phi_dot_norm;
    let config = small_config();
    let report = verify_phi_dot_norm(&config, 1, NormMeasure::Gaussian, 300).unwrap();
    assert_eq!(report.phi_dot.len(), 2);
    assert_eq!(report.baseline.len(), 2);
    for point in report.phi_dot.iter().chain(&report.baseline) {
        assert!(point.value > 0.0 && point.value.is_finite());
    }
    // Even on a two-point grid the corrected observable decays markedly
    // faster than the bare action rate.
    assert!(report.phi_dot_slope < report.baseline_slope);
    assert!((report.ratio_slope - (report.phi_dot_slope - report.baseline_slope)).abs() <= 1e-12);
}
