//! Integrator checks against exactly solvable flows: plane waves, the linear
//! propagator, conservation laws, reversibility, and the Strang order.

use nls_gibbs::dynamics::{
    conservation_report, evolve, l2_norm_sq, momentum, plane_wave_frequency, step_strang,
    trajectory_csv, IntegratorConfig,
};
use nls_gibbs::state::{FourierState, ModelParams};
use nls_gibbs::Complex64;

fn quartic(n: i32) -> ModelParams {
    ModelParams::new(2, vec![1.0], 1.0, n).unwrap()
}

fn random_state(params: &ModelParams, seed: u64) -> FourierState {
    nls_gibbs::gibbs::sample_gaussian(params, seed, 0, 1).pop().unwrap()
}

#[test]
fn plane_wave_phase_error_below_1e8() {
    let params = quartic(4);
    let amp = 0.7;
    let state = FourierState::from_modes(4, &[(1, Complex64::new(amp, 0.0))]).unwrap();
    let config = IntegratorConfig::new(1e-3, 1.0, 1000);
    let traj = evolve(&state, &params, &config).unwrap();
    let omega = plane_wave_frequency(&params, 1, amp);
    let expected = Complex64::new(amp, 0.0) * Complex64::cis(-omega * 1.0);
    let got = traj.last().mode(1);
    assert!(
        (got - expected).norm() < 1e-8,
        "phase error {}",
        (got - expected).norm()
    );
}

#[test]
fn zero_nonlinearity_matches_exact_propagator() {
    let params = ModelParams::linear_only(2, 1.0, 3).unwrap();
    let state = random_state(&quartic(3), 5);
    let dt = 1e-2;
    let stepped = step_strang(&state, &params, dt);
    for k in -3..=3 {
        let exact = state.mode(k) * Complex64::cis(-(k as f64) * (k as f64) * dt);
        assert!((stepped.mode(k) - exact).norm() < 1e-15, "mode {k}");
    }
}

#[test]
fn l2_and_momentum_drift_over_1e4_steps() {
    let params = quartic(4);
    let state = random_state(&params, 9);
    let config = IntegratorConfig::new(1e-3, 10.0, 100);
    let traj = evolve(&state, &params, &config).unwrap();
    let l20 = l2_norm_sq(traj.initial());
    let p0 = momentum(traj.initial());
    for s in &traj.snapshots {
        assert!((l2_norm_sq(s) - l20).abs() / l20 < 1e-12);
        assert!((momentum(s) - p0).abs() < 1e-10);
    }
}

#[test]
fn horizon_zero_returns_single_snapshot() {
    let params = quartic(2);
    let state = random_state(&params, 1);
    let traj = evolve(&state, &params, &IntegratorConfig::new(1e-3, 0.0, 10)).unwrap();
    assert_eq!(traj.times, vec![0.0]);
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.initial().coeffs(), state.coeffs());
}

#[test]
fn reversibility_within_1e9() {
    let params = quartic(6);
    let state = random_state(&params, 21);
    let forward = evolve(&state, &params, &IntegratorConfig::new(1e-3, 5.0, 5000)).unwrap();
    let back = evolve(
        forward.last(),
        &params,
        &IntegratorConfig::new(-1e-3, 5.0, 5000),
    )
    .unwrap();
    let mut err = 0.0f64;
    for k in -6..=6 {
        err = err.max((back.last().mode(k) - state.mode(k)).norm());
    }
    assert!(err < 1e-9, "round trip error {err}");
}

#[test]
fn strang_order_at_least_1p9() {
    let params = quartic(4);
    let state = random_state(&params, 33);
    let h0 = nls_gibbs::state::conserved_energy(&state, &params);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for dt in [2e-3, 1e-3, 5e-4] {
        let traj = evolve(&state, &params, &IntegratorConfig::new(dt, 2.0, 100_000)).unwrap();
        let dh = (nls_gibbs::state::conserved_energy(traj.last(), &params) - h0).abs();
        xs.push(dt.ln());
        ys.push((dh / (1.0 + h0.abs())).ln());
    }
    let (slope, _) = nls_gibbs::gibbs::least_squares_line(&xs, &ys);
    assert!(slope >= 1.9, "measured order {slope}");
}

#[test]
fn h_drift_below_1e6_at_dt_1e3() {
    let params = quartic(4);
    let state = random_state(&params, 2);
    let traj = evolve(&state, &params, &IntegratorConfig::new(1e-3, 2.0, 100)).unwrap();
    let report = conservation_report(&traj, &params);
    assert!(report.h_drift_rel < 1e-6, "H drift {}", report.h_drift_rel);
    assert!(report.l2_drift_rel < 1e-12);
}

#[test]
fn linear_flow_h_drift_at_machine_level() {
    let params = ModelParams::linear_only(2, 1.0, 4).unwrap();
    let state = random_state(&quartic(4), 13);
    let traj = evolve(&state, &params, &IntegratorConfig::new(1e-3, 1.0, 100)).unwrap();
    let report = conservation_report(&traj, &params);
    assert!(report.h_drift_rel < 1e-13);
}

#[test]
fn gauge_covariance() {
    let params = quartic(3);
    let state = random_state(&params, 17);
    let phase = Complex64::cis(0.8342);
    let rotated = state.scaled(phase);
    let config = IntegratorConfig::new(1e-3, 0.5, 500);
    let a = evolve(&state, &params, &config).unwrap();
    let b = evolve(&rotated, &params, &config).unwrap();
    let mut err = 0.0f64;
    for k in -3..=3 {
        err = err.max((a.last().mode(k) * phase - b.last().mode(k)).norm());
    }
    assert!(err < 1e-12, "gauge error {err}");
}

#[test]
fn single_mode_actions_exactly_constant() {
    let params = quartic(5);
    let state = FourierState::from_modes(5, &[(2, Complex64::new(0.9, 0.4))]).unwrap();
    let traj = evolve(&state, &params, &IntegratorConfig::new(1e-3, 3.0, 300)).unwrap();
    let a0 = traj.initial().mode(2).norm_sqr();
    for s in &traj.snapshots {
        assert!((s.mode(2).norm_sqr() - a0).abs() < 1e-11 * a0);
        for k in -5..=5 {
            if k != 2 {
                assert!(s.mode(k).norm_sqr() < 1e-28);
            }
        }
    }
}

#[test]
fn phase_wrap_guard_rejects_coarse_step() {
    let params = quartic(32);
    let state = FourierState::zeros(32);
    let err = evolve(&state, &params, &IntegratorConfig::new(1e-2, 1.0, 1)).unwrap_err();
    assert!(err.to_string().contains("exceeds"));
}

#[test]
fn determinism_and_csv_shape() {
    let params = quartic(3);
    let state = random_state(&params, 40);
    let config = IntegratorConfig::new(1e-3, 0.2, 50);
    let a = evolve(&state, &params, &config).unwrap();
    let b = evolve(&state, &params, &config).unwrap();
    let csv_a = trajectory_csv(&a, &params, 2, None);
    let csv_b = trajectory_csv(&b, &params, 2, None);
    assert_eq!(csv_a, csv_b, "reruns must be byte-identical");
    let mut lines = csv_a.lines();
    assert_eq!(lines.next().unwrap(), "t,H,l2,action_-2,action_-1,action_0,action_1,action_2");
    // initial row + one row per observation window + final row
    assert_eq!(csv_a.lines().count(), 1 + a.times.len());
}
