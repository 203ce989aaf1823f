//! Sampling the Gaussian reference measure, reweighting to the interacting
//! measure, and the Monte Carlo estimators built on both.
//!
//! The reference measure factorizes over modes with density proportional to
//! e^{−(β/2)(1+k²)|ψₖ|²} on each complex plane, so E|ψₖ|² = 2/(β(1+k²)).
//! The interacting measure reweights by e^{−βP(ψ)} with P ≥ 0, so weights lie
//! in (0, 1] and self-normalized importance sampling is stable at large β.
//! An independence Metropolis chain over the same proposal is kept as a
//! cross-check on the importance estimator.
//!
//! Reproducibility: sample i is drawn from its own counter-derived RNG keyed
//! by (seed, i), so streams are identical for any worker count.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{FourierState, ModelParams, StateError};

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error("effective sample size {ess:.2} of {n} draws is below 10; increase beta or the sample count")]
    EssTooLow { ess: f64, n: usize },
    #[error("observable returned a non-finite value on sample {index}")]
    NonFiniteObservable { index: usize },
    #[error("no samples provided")]
    Empty,
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    GaussianOnly,
    ImportanceWeights,
    IndependenceMetropolis,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub params: ModelParams,
    pub seed: u64,
    pub method: SampleMethod,
    pub n_samples: usize,
}

/// A state together with the log of its reweighting factor; 0 in gaussian-only
/// and Metropolis modes, −βP(ψ) ≤ 0 in importance mode.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub state: FourierState,
    pub log_weight: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
    pub n: usize,
}

/// RNG for one sample index: 32-byte key holding (seed, index) little endian.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Exact per-mode second moment E|ψₖ|² = 2/(β(1+k²)) of the reference measure.
pub fn gaussian_mode_variance(params: &ModelParams, k: i32) -> f64 {
    2.0 / (params.beta * (1.0 + (k as f64) * (k as f64)))
}

/// Exact fourth moment E|ψₖ|⁴ = 8/(β²(1+k²)²).
pub fn gaussian_mode_fourth_moment(params: &ModelParams, k: i32) -> f64 {
    let m2 = gaussian_mode_variance(params, k);
    2.0 * m2 * m2
}

/// Exact reference-measure norm of the action observable,
/// ‖|ψₖ|²‖ = √(E|ψₖ|⁴) = √8/(β(1+k²)).
pub fn gaussian_action_norm(params: &ModelParams, k: i32) -> f64 {
    gaussian_mode_fourth_moment(params, k).sqrt()
}

fn draw_state(params: &ModelParams, rng: &mut ChaCha12Rng) -> FourierState {
    let n = params.n;
    let mut state = FourierState::zeros(n);
    for k in -n..=n {
        let sigma = (1.0 / (params.beta * (1.0 + (k as f64) * (k as f64)))).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        state.set_mode(k, Complex64::new(sigma * re, sigma * im));
    }
    state
}

/// Draws `count` independent reference-measure states, one RNG stream per
/// sample index starting at `first_index`.
pub fn sample_gaussian(params: &ModelParams, seed: u64, first_index: u64, count: usize) -> Vec<FourierState> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, first_index + i);
            draw_state(params, &mut rng)
        })
        .collect()
}

/// log of the reweighting factor, −β·P(ψ) ≤ 0.
pub fn log_gibbs_weight(state: &FourierState, params: &ModelParams) -> f64 {
    -params.beta * crate::state::interaction_energy(state, params)
}

/// e^{−βP(ψ)} ∈ (0, 1]; hard assertion on the upper bound.
pub fn gibbs_weight(state: &FourierState, params: &ModelParams) -> f64 {
    let w = log_gibbs_weight(state, params).exp();
    assert!(w <= 1.0, "weight {w} exceeds 1; interaction energy went negative");
    w
}

/// Draws the configured sample set. Importance mode attaches log weights;
/// gaussian-only emits the reference stream with zero log weight; Metropolis
/// runs an independence chain (100 burn-in proposals) whose output is
/// unweighted by construction.
pub fn sample(config: &SamplerConfig) -> Result<Vec<WeightedSample>, GibbsError> {
    let params = &config.params;
    match config.method {
        SampleMethod::GaussianOnly => Ok(sample_gaussian(params, config.seed, 0, config.n_samples)
            .into_iter()
            .map(|state| WeightedSample { state, log_weight: 0.0 })
            .collect()),
        SampleMethod::ImportanceWeights => sample_gaussian(params, config.seed, 0, config.n_samples)
            .into_par_iter()
            .map(|state| {
                let log_weight = log_gibbs_weight(&state, params);
                Ok(WeightedSample { state, log_weight })
            })
            .collect(),
        SampleMethod::IndependenceMetropolis => {
            const BURN_IN: usize = 100;
            let total = config.n_samples + BURN_IN;
            let mut out = Vec::with_capacity(config.n_samples);
            let mut rng0 = stream_rng(config.seed, 0);
            let mut current = draw_state(params, &mut rng0);
            let mut current_logw = log_gibbs_weight(&current, params);
            for i in 1..total as u64 {
                let mut rng = stream_rng(config.seed, i);
                let proposal = draw_state(params, &mut rng);
                let proposal_logw = log_gibbs_weight(&proposal, params);
                let u: f64 = rng.random();
                if (proposal_logw - current_logw).exp() > u {
                    current = proposal;
                    current_logw = proposal_logw;
                }
                if i as usize >= BURN_IN {
                    out.push(WeightedSample { state: current.clone(), log_weight: 0.0 });
                }
            }
            Ok(out)
        }
    }
}

/// Self-normalized importance estimate of ⟨f⟩ with delta-method standard error
/// and the Σw-based effective sample size. Unit weights reduce this to the
/// plain sample mean.
pub fn estimate_mean(
    samples: &[WeightedSample],
    f: impl Fn(&FourierState) -> f64 + Sync,
) -> Result<Estimate, GibbsError> {
    let values: Vec<f64> = samples.par_iter().map(|s| f(&s.state)).collect();
    let log_weights: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    estimate_mean_of_values(&values, &log_weights)
}

pub fn estimate_mean_of_values(values: &[f64], log_weights: &[f64]) -> Result<Estimate, GibbsError> {
    let n = values.len();
    if n == 0 {
        return Err(GibbsError::Empty);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(GibbsError::NonFiniteObservable { index });
    }
    let max_lw = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max_lw).exp()).collect();
    let s1: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    let ess = s1 * s1 / s2;
    if ess < 10.0 {
        return Err(GibbsError::EssTooLow { ess, n });
    }
    let mean = weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / s1;
    let var_sum: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * w * (v - mean) * (v - mean))
        .sum();
    let stderr = var_sum.sqrt() / s1;
    Ok(Estimate { mean, stderr, ess, n })
}

/// Plain (not self-normalized) mean of the weights e^{−βP}: the Monte Carlo
/// estimator of the partition-function ratio, in (0, 1].
pub fn mean_weight(samples: &[WeightedSample]) -> Result<Estimate, GibbsError> {
    let n = samples.len();
    if n == 0 {
        return Err(GibbsError::Empty);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.log_weight.exp()).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    Ok(Estimate { mean, stderr: (var / n as f64).sqrt(), ess: n as f64, n })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionLowerBoundReport {
    pub k: i32,
    pub beta: f64,
    pub norm_estimate: f64,
    pub norm_stderr: f64,
    pub reference: f64,
    pub ratio: f64,
    pub floor: f64,
    pub ess: f64,
    pub pass: bool,
}

/// Estimates ‖|ψₖ|²‖ = √⟨|ψₖ|⁴⟩ under the weighted measure and compares the
/// ratio against 1/(β(1+k²)) with the given floor (reference-measure exact
/// value of the ratio: √8).
pub fn verify_action_lower_bound(
    samples: &[WeightedSample],
    params: &ModelParams,
    k: i32,
    floor: f64,
) -> Result<ActionLowerBoundReport, GibbsError> {
    let est = estimate_mean(samples, |state| state.mode(k).norm_sqr().powi(2))?;
    let norm_estimate = est.mean.max(0.0).sqrt();
    // delta method: d√x = dx/(2√x)
    let norm_stderr = if norm_estimate > 0.0 { est.stderr / (2.0 * norm_estimate) } else { 0.0 };
    let reference = 1.0 / (params.beta * (1.0 + (k as f64) * (k as f64)));
    let ratio = norm_estimate / reference;
    Ok(ActionLowerBoundReport {
        k,
        beta: params.beta,
        norm_estimate,
        norm_stderr,
        reference,
        ratio,
        floor,
        ess: est.ess,
        pass: ratio >= floor,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub tail: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub s1: f64,
    pub beta: f64,
    pub points: Vec<TailPoint>,
    /// Slope of log(tail) against β·M²; None when fewer than two thresholds
    /// have exceedances (degenerate, counts as a pass).
    pub slope: Option<f64>,
    pub slope_bound: f64,
    pub pass: bool,
}

/// Tail of the H^{s1} norm under the weighted measure over a grid of
/// thresholds, with the decay slope fitted on log(tail) vs β·M².
pub fn tail_probability(
    samples: &[WeightedSample],
    params: &ModelParams,
    s1: f64,
    thresholds: &[f64],
    slope_bound: f64,
) -> Result<TailReport, GibbsError> {
    let norms: Vec<f64> = samples
        .par_iter()
        .map(|s| crate::state::hs_norm(&s.state, s1))
        .collect();
    let log_weights: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let mut points = Vec::with_capacity(thresholds.len());
    for &m in thresholds {
        let indicator: Vec<f64> =
            norms.iter().map(|&x| if x > m { 1.0 } else { 0.0 }).collect();
        let est = estimate_mean_of_values(&indicator, &log_weights)?;
        points.push(TailPoint { threshold: m, tail: est.mean, stderr: est.stderr });
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.tail > 0.0)
        .map(|p| (params.beta * p.threshold * p.threshold, p.tail.ln()))
        .collect();
    let slope = if fit_points.len() >= 2 {
        let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
        Some(least_squares_line(&xs, &ys).0)
    } else {
        None
    };
    let pass = slope.map_or(true, |s| s <= slope_bound);
    Ok(TailReport { s1, beta: params.beta, points, slope, slope_bound, pass })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmallBallReport {
    pub gamma: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
    pub within_3_sigma: bool,
}

/// Reference-measure probability that every mode satisfies
/// |ψₖ| < (1+k²)^{−γ/2} β^{−1/2}, by the exact per-mode product and by direct
/// Monte Carlo on the given reference samples. The closed form is β-free.
pub fn small_ball_probability(
    samples: &[FourierState],
    params: &ModelParams,
    gamma: f64,
) -> SmallBallReport {
    let closed_form = small_ball_closed_form(params.n, gamma);
    let inside = |state: &FourierState| {
        (-params.n..=params.n).all(|k| {
            let bound = (1.0 + (k as f64) * (k as f64)).powf(-gamma) / params.beta;
            state.mode(k).norm_sqr() < bound
        })
    };
    let hits = samples.iter().filter(|s| inside(s)).count();
    let n = samples.len().max(1);
    let p = hits as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    let within_3_sigma = (p - closed_form).abs() <= 3.0 * stderr.max(1e-12);
    SmallBallReport { gamma, closed_form, monte_carlo: p, stderr, within_3_sigma }
}

/// ∏_{|k|≤N} (1 − e^{−(1+k²)^{1−γ}/2}).
pub fn small_ball_closed_form(n: i32, gamma: f64) -> f64 {
    (-n..=n)
        .map(|k| {
            let kk = 1.0 + (k as f64) * (k as f64);
            1.0 - (-kk.powf(1.0 - gamma) / 2.0).exp()
        })
        .product()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormDominationCheck {
    pub c_hat: f64,
    pub weighted_norm: f64,
    pub reference_norm: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks ‖f‖_weighted ≤ e^Ĉ‖f‖_reference with Ĉ = −log(mean weight), both
/// sides estimated on the same sample stream. With shared samples and weights
/// ≤ 1 this holds as an algebraic identity up to roundoff.
pub fn norm_domination_check(
    samples: &[WeightedSample],
    f: impl Fn(&FourierState) -> f64 + Sync,
) -> Result<NormDominationCheck, GibbsError> {
    let sq: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let v = f(&s.state);
            v * v
        })
        .collect();
    let log_weights: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let weighted = estimate_mean_of_values(&sq, &log_weights)?;
    let c_hat = -mean_weight(samples)?.mean.ln();
    let reference_sq = sq.iter().sum::<f64>() / sq.len() as f64;
    let weighted_norm = weighted.mean.max(0.0).sqrt();
    let reference_norm = reference_sq.sqrt();
    let bound = c_hat.exp() * reference_norm;
    Ok(NormDominationCheck {
        c_hat,
        weighted_norm,
        reference_norm,
        bound,
        pass: weighted_norm <= bound * (1.0 + 1e-12),
    })
}

/// Ordinary least squares fit y ≈ slope·x + intercept.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a line fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
