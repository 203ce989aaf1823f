//! Release gate: twelve numbered criteria, each a single test that prints one
//! PASS/FAIL line with its runtime against the budget. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines as they land.

use std::sync::OnceLock;
use std::time::Instant;

use nls_gibbs::dynamics::{conservation_report, evolve, plane_wave_frequency, IntegratorConfig};
use nls_gibbs::gibbs::{
    gaussian_mode_fourth_moment, gaussian_mode_variance, least_squares_line, mean_weight, sample,
    sample_gaussian, tail_probability, verify_action_lower_bound, SampleMethod, SamplerConfig,
};
use nls_gibbs::harness::scaling::{verify_phi_dot_norm, NormMeasure};
use nls_gibbs::harness::{
    compare_drift, estimate_bad_set, run_drift_experiment, stationarity_check, DriftExperiment,
    ExperimentConfig, SamplerSettings,
};
use nls_gibbs::normal_form::{
    build, build_base, build_h2j, verify_identities, z4_closed_form, DeltaRule,
};
use nls_gibbs::poly::{kernel_range_split, lh2_apply, poisson_bracket};
use nls_gibbs::state::{FourierState, ModelParams};
use nls_gibbs::Complex64;

fn conclude(idx: usize, name: &str, ok: bool, budget_s: f64, started: Instant, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    let within = elapsed <= budget_s;
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    println!("criterion {idx:02} {name}: {verdict} [{elapsed:.1}s / {budget_s:.0}s] {detail}");
    assert!(ok, "criterion {idx:02} {name}: {detail}");
    assert!(
        within,
        "criterion {idx:02} {name}: runtime {elapsed:.1}s over the {budget_s:.0}s budget"
    );
}

fn quartic(beta: f64, n: i32) -> ModelParams {
    ModelParams::new(2, vec![1.0], beta, n).unwrap()
}

#[test]
fn criterion_01_symbolic_identities() {
    let started = Instant::now();
    let params = ModelParams::new(3, vec![1.0, 1.0], 8.0, 6).unwrap();
    let base = build_base(&params, 1).unwrap();

    let z4_kernel = lh2_apply(&base.z4).sup_norm();

    let mut hom4 = lh2_apply(&base.chi4);
    hom4.add_assign_scaled(&base.h4_range, Complex64::ONE);
    let hom4_residual = hom4.sup_norm();

    let mut order4 = lh2_apply(&base.phi_k4);
    order4.add_assign_scaled(&poisson_bracket(&base.h4, &base.phi_k2).unwrap(), Complex64::ONE);
    let order4_residual = order4.sup_norm();

    let mut hom6 = lh2_apply(&base.chi6);
    hom6.add_assign_scaled(&base.g_range, Complex64::ONE);
    let hom6_residual = hom6.sup_norm();

    let tol = 1e-12;
    let ok = z4_kernel <= tol
        && hom4_residual <= tol
        && order4_residual <= tol
        && hom6_residual <= tol;
    conclude(
        1,
        "symbolic-identities",
        ok,
        60.0,
        started,
        &format!(
            "n=6 q=3 sup residuals: z4-kernel {z4_kernel:.2e}, deg-4 homological \
             {hom4_residual:.2e}, order-4 chain {order4_residual:.2e}, deg-6 homological \
             {hom6_residual:.2e}, tol {tol:.0e}"
        ),
    );
}

#[test]
fn criterion_02_resonant_closed_form() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (n, c2) in [(4, 1.0), (8, 1.0), (4, 0.7)] {
        let params = ModelParams::new(2, vec![c2], 16.0, n).unwrap();
        let h4 = build_h2j(&params, 2).unwrap();
        let (kernel, _) = kernel_range_split(&h4);
        let mut diff = kernel;
        diff.add_assign_scaled(&z4_closed_form(&params), Complex64::new(-1.0, 0.0));
        worst = worst.max(diff.sup_norm());
    }
    let ok = worst <= 1e-12;
    conclude(
        2,
        "resonant-closed-form",
        ok,
        60.0,
        started,
        &format!("worst sup difference over (n, c2) in {{(4,1),(8,1),(4,0.7)}}: {worst:.2e}"),
    );
}

#[test]
fn criterion_03_nonresonant_solve() {
    let started = Instant::now();
    let params = quartic(32.0, 8);
    let pkg = build(&params, 1, DeltaRule::Auto).unwrap();
    let report = verify_identities(&pkg, 100, 9).unwrap();
    let solve = report
        .checks
        .iter()
        .find(|c| c.name == "nonresonant_solve_sampled")
        .expect("sampled solve check present");
    let ok = solve.pass && solve.value <= 1e-10 && report.pass;
    conclude(
        3,
        "nonresonant-solve",
        ok,
        120.0,
        started,
        &format!(
            "n=8 beta=32, 100 samples: max relative residual {:.2e} (tol 1e-10), full \
             identity report pass={}",
            solve.value, report.pass
        ),
    );
}

#[test]
fn criterion_04_reference_moments() {
    let started = Instant::now();
    let mut ok = true;
    let mut worst_z = 0.0f64;
    for beta in [8.0, 64.0] {
        let params = quartic(beta, 4);
        let states = sample_gaussian(&params, 41, 0, 100_000);
        for k in [0, 1, 4] {
            for (target, moment) in [
                (gaussian_mode_variance(&params, k), 2),
                (gaussian_mode_fourth_moment(&params, k), 4),
            ] {
                let values: Vec<f64> = states
                    .iter()
                    .map(|s| s.mode(k).norm().powi(moment))
                    .collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let se = (var / n).sqrt();
                let z = (mean - target).abs() / se;
                worst_z = worst_z.max(z);
                ok &= z <= 3.0;
            }
        }
    }
    conclude(
        4,
        "reference-moments",
        ok,
        60.0,
        started,
        &format!(
            "second and fourth moments at (beta, k) in {{8,64}}x{{0,1,4}}, 1e5 samples: \
             worst |z| = {worst_z:.2}"
        ),
    );
}

#[test]
fn criterion_05_action_lower_bound() {
    let started = Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    for beta in [16.0, 64.0] {
        let params = quartic(beta, 8);
        let samples = sample(&SamplerConfig {
            params: params.clone(),
            seed: 11,
            method: SampleMethod::ImportanceWeights,
            n_samples: 4000,
        })
        .unwrap();
        for k in [0, 1, 3] {
            let report = verify_action_lower_bound(&samples, &params, k, 0.5).unwrap();
            ok &= report.pass && report.ratio <= 5.0;
            detail.push_str(&format!("(beta={beta},k={k}) {:.2} ", report.ratio));
        }
    }
    conclude(
        5,
        "action-lower-bound",
        ok,
        120.0,
        started,
        &format!("normalized action norms, window [0.5, 5]: {}", detail.trim_end()),
    );
}

#[test]
fn criterion_06_partition_ratio() {
    let started = Instant::now();
    let mut estimates = Vec::new();
    for beta in [8.0, 16.0, 32.0, 64.0] {
        let params = quartic(beta, 8);
        let samples = sample(&SamplerConfig {
            params,
            seed: 17,
            method: SampleMethod::ImportanceWeights,
            n_samples: 20_000,
        })
        .unwrap();
        estimates.push((beta, mean_weight(&samples).unwrap()));
    }
    let mut ok = estimates.iter().all(|(_, e)| e.mean > 0.0 && e.mean <= 1.0);
    for pair in estimates.windows(2) {
        let (_, lo) = &pair[0];
        let (_, hi) = &pair[1];
        let se = (lo.stderr * lo.stderr + hi.stderr * hi.stderr).sqrt();
        ok &= hi.mean >= lo.mean - 3.0 * se;
    }
    let listed: Vec<String> =
        estimates.iter().map(|(b, e)| format!("{b}:{:.4}", e.mean)).collect();
    conclude(
        6,
        "partition-ratio",
        ok,
        60.0,
        started,
        &format!(
            "ratio in (0,1] and nondecreasing within 3 sigma across beta: {}",
            listed.join(" ")
        ),
    );
}

#[test]
fn criterion_07_norm_tail() {
    let started = Instant::now();
    let params = quartic(16.0, 32);
    let samples = sample(&SamplerConfig {
        params: params.clone(),
        seed: 23,
        method: SampleMethod::ImportanceWeights,
        n_samples: 30_000,
    })
    .unwrap();
    let s1 = 1.0 / 3.0;
    let rms: f64 = (-params.truncation()..=params.truncation())
        .map(|k| {
            let w = 1.0 + (k as f64) * (k as f64);
            w.powf(s1 - 1.0) * 2.0 / params.beta
        })
        .sum::<f64>()
        .sqrt();
    let thresholds: Vec<f64> = [1.0, 1.1, 1.2, 1.35, 1.5].iter().map(|f| f * rms).collect();
    let report = tail_probability(&samples, &params, s1, &thresholds, -0.25).unwrap();
    let populated = report.points.iter().filter(|p| p.tail > 0.0).count();
    let ok = report.pass && report.slope.is_some() && populated >= 3;
    conclude(
        7,
        "norm-tail",
        ok,
        120.0,
        started,
        &format!(
            "beta=16 n=32 s1=1/3: slope {:?} (bound -0.25), {populated}/5 thresholds \
             with exceedances, smallest tail {:.1e}",
            report.slope,
            report.points.last().map(|p| p.tail).unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_08_integrator_fidelity() {
    let started = Instant::now();

    let params = quartic(16.0, 8);
    let state = sample_gaussian(&params, 3, 0, 1).pop().unwrap();
    let traj = evolve(&state, &params, &IntegratorConfig::new(1e-3, 10.0, 100)).unwrap();
    let conservation = conservation_report(&traj, &params);
    let l2_ok = conservation.l2_drift_rel < 1e-12;

    let small = quartic(16.0, 4);
    let seed_state = sample_gaussian(&small, 5, 0, 1).pop().unwrap();
    let t_end = 0.5;
    let reference = evolve(&seed_state, &small, &IntegratorConfig::new(6.25e-5, t_end, usize::MAX))
        .unwrap()
        .last()
        .clone();
    let mut log_dt = Vec::new();
    let mut log_err = Vec::new();
    for dt in [2e-3, 1e-3, 5e-4] {
        let end = evolve(&seed_state, &small, &IntegratorConfig::new(dt, t_end, usize::MAX))
            .unwrap()
            .last()
            .clone();
        let err: f64 = (-4..=4)
            .map(|k| (end.mode(k) - reference.mode(k)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        log_dt.push(dt.ln());
        log_err.push(err.ln());
    }
    let (order, _) = least_squares_line(&log_dt, &log_err);
    let order_ok = order >= 1.9;

    let amp = 0.7;
    let wave = FourierState::from_modes(4, &[(1, Complex64::new(amp, 0.0))]).unwrap();
    let traj = evolve(&wave, &small, &IntegratorConfig::new(1e-3, 1.0, 1000)).unwrap();
    let omega = plane_wave_frequency(&small, 1, amp);
    let exact = Complex64::new(amp, 0.0) * Complex64::cis(-omega);
    let phase_err = (traj.last().mode(1) - exact).norm();
    let phase_ok = phase_err < 1e-8;

    conclude(
        8,
        "integrator-fidelity",
        l2_ok && order_ok && phase_ok,
        60.0,
        started,
        &format!(
            "mass drift {:.1e} over 1e4 steps (tol 1e-12), step-doubling order {order:.2} \
             (floor 1.9), plane-wave error {phase_err:.1e} at t=1 (tol 1e-8)",
            conservation.l2_drift_rel
        ),
    );
}

#[test]
fn criterion_09_ensemble_stationarity() {
    let started = Instant::now();
    let config = ExperimentConfig {
        params: quartic(16.0, 16),
        sampler: SamplerSettings {
            seed: 2027,
            n_samples: 500,
            method: SampleMethod::ImportanceWeights,
        },
        integrator: IntegratorConfig::new(2e-3, 1.0, 1000),
        tk_list: vec![1],
        beta_grid: vec![16.0],
        delta_rule: DeltaRule::Auto,
        eta1: 1.0,
        eta2: 0.5,
        horizon_scale: 1.0,
        alpha: 0.25,
        norm_samples: 2000,
        nf_truncation: None,
    };
    let report = stationarity_check(&config, 1).unwrap();
    conclude(
        9,
        "ensemble-stationarity",
        report.pass,
        600.0,
        started,
        &format!(
            "beta=16 n=16, 500 samples to T={}: <I_1> {:.5} -> {:.5}, paired z = {:.2} \
             (limit 3)",
            report.t_horizon, report.mean_initial.mean, report.mean_final.mean, report.z
        ),
    );
}

#[test]
fn criterion_10_derivative_scaling() {
    let started = Instant::now();
    let config = ExperimentConfig {
        params: quartic(8.0, 8),
        sampler: SamplerSettings {
            seed: 1311,
            n_samples: 100,
            method: SampleMethod::ImportanceWeights,
        },
        integrator: IntegratorConfig::new(1e-3, 1.0, 1000),
        tk_list: vec![1],
        beta_grid: vec![8.0, 16.0, 32.0, 64.0],
        delta_rule: DeltaRule::Auto,
        eta1: 1.0,
        eta2: 0.5,
        horizon_scale: 1.0,
        alpha: 0.25,
        norm_samples: 2000,
        nf_truncation: None,
    };
    let report = verify_phi_dot_norm(&config, 1, NormMeasure::Gaussian, 1500).unwrap();
    let baseline_ok = (report.baseline_slope + 2.0).abs() <= 0.3;
    conclude(
        10,
        "derivative-scaling",
        report.pass && baseline_ok,
        900.0,
        started,
        &format!(
            "n=8 target mode 1, width rule beta^-13/10: corrected slope {:.2} (bound -2.6), \
             bare slope {:.2} (want -2 +/- 0.3), ratio slope {:.2}",
            report.phi_dot_slope, report.baseline_slope, report.ratio_slope
        ),
    );
}

fn drift_config() -> ExperimentConfig {
    ExperimentConfig {
        params: quartic(16.0, 8),
        sampler: SamplerSettings {
            seed: 2024,
            n_samples: 200,
            method: SampleMethod::ImportanceWeights,
        },
        integrator: IntegratorConfig::new(1e-3, 1.0, 2000),
        tk_list: vec![1],
        beta_grid: vec![16.0, 32.0],
        delta_rule: DeltaRule::Auto,
        eta1: 1.0,
        eta2: 0.5,
        horizon_scale: 1.0,
        alpha: 0.25,
        norm_samples: 2000,
        nf_truncation: None,
    }
}

static DRIFT: OnceLock<DriftExperiment> = OnceLock::new();

fn drift_experiment() -> &'static DriftExperiment {
    DRIFT.get_or_init(|| run_drift_experiment(&drift_config()).expect("drift experiment"))
}

#[test]
fn criterion_11_drift_comparison() {
    let started = Instant::now();
    let experiment = drift_experiment();
    let comparison = compare_drift(experiment, Some(1), 7, 400);
    let mut detail = String::new();
    for m in &comparison.per_beta {
        detail.push_str(&format!(
            "beta={}: med drift I {:.3e}, Phi {:.3e}; ",
            m.beta, m.median_i, m.median_phi
        ));
    }
    for p in &comparison.monotone {
        detail.push_str(&format!(
            "I({}) vs I({}): {:.3e} <= {:.3e} + 3*{:.1e}",
            p.beta_hi, p.beta_lo, p.median_hi, p.median_lo, p.se_diff
        ));
    }
    conclude(
        11,
        "drift-comparison",
        comparison.pass,
        1800.0,
        started,
        &format!("200 samples per beta to T=beta^2, mode 1: {detail}"),
    );
}

#[test]
fn criterion_12_bad_set_envelope() {
    let started = Instant::now();
    let experiment = drift_experiment();
    let eta1 = drift_config().eta1;
    let mut ok = true;
    let mut detail = String::from("envelope vs fraction on every drift run: ");
    for run in &experiment.runs {
        let report = estimate_bad_set(run, eta1);
        ok &= report.pass;
        for m in &report.per_mode {
            detail.push_str(&format!(
                "(beta={}, k={}) {:.2e} >= {:.2e} (se {:.1e}); ",
                run.beta, m.k, m.envelope, m.bad_fraction_phi, m.fraction_stderr
            ));
        }
    }
    conclude(12, "bad-set-envelope", ok, 1800.0, started, detail.trim_end());
}
