//! End-to-end drift experiments.
//!
//! The core loop draws an ensemble from the weighted sampler, pushes every
//! state through the flow to a horizon T = c·β², and records how far each
//! tracked action and its sixth-order correction move. Everything downstream
//! (bad-set fractions, Chebyshev envelopes, per-mode union budgets, the
//! stationarity smoke test) is bookkeeping over those records.
//!
//! Drift normalization: the action drift is |I_k(t) − I_k(0)|·(1+k²)·β, so a
//! unit value means "moved by one typical action size". The corrected
//! observable has no closed-form scale, so its drift is divided by a Monte
//! Carlo estimate of ‖|ψ_k|²‖ taken from a sample stream disjoint from the
//! one that produced the ensemble (indices are offset past the ensemble's),
//! which also feeds the Chebyshev envelope.

pub mod scaling;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve, DynamicsError, IntegratorConfig, Trajectory};
use crate::gibbs::{
    estimate_mean_of_values, log_gibbs_weight, sample, sample_gaussian, stream_rng, Estimate,
    GibbsError, SampleMethod, SamplerConfig, WeightedSample,
};
use crate::normal_form::{
    build_base, build_package, DeltaRule, NormalFormBase, NormalFormError, NormalFormPackage,
};
use crate::poly::cutoff::CutoffSpec;
use crate::state::{FourierState, ModelParams, ParamsError};
use rand::RngExt;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub seed: u64,
    pub n_samples: usize,
    #[serde(default = "default_method")]
    pub method: SampleMethod,
}

fn default_method() -> SampleMethod {
    SampleMethod::ImportanceWeights
}

fn default_eta1() -> f64 {
    1.0
}

fn default_eta2() -> f64 {
    0.5
}

fn default_horizon_scale() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.25
}

fn default_norm_samples() -> usize {
    2000
}

/// One experiment: a β grid over otherwise fixed model parameters. `params.n`
/// is the dynamical truncation; `nf_truncation` (default: the same) is the
/// truncation of the corrected observable, which is evaluated on the mode
/// restriction when smaller.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub sampler: SamplerSettings,
    /// `t_end` here is a placeholder; every run overrides it with the
    /// horizon rule T = horizon_scale·β².
    pub integrator: IntegratorConfig,
    pub tk_list: Vec<i32>,
    pub beta_grid: Vec<f64>,
    #[serde(default)]
    pub delta_rule: DeltaRule,
    #[serde(default = "default_eta1")]
    pub eta1: f64,
    #[serde(default = "default_eta2")]
    pub eta2: f64,
    #[serde(default = "default_horizon_scale")]
    pub horizon_scale: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_norm_samples")]
    pub norm_samples: usize,
    #[serde(default)]
    pub nf_truncation: Option<i32>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        // Deserialization bypasses the params constructor; re-run it.
        ModelParams::new(
            self.params.degree(),
            self.params.coefficients().to_vec(),
            self.params.beta,
            self.params.n,
        )?;
        self.integrator.validate(self.params.n)?;
        if self.beta_grid.is_empty() {
            return Err(config_err("beta_grid must not be empty"));
        }
        for w in self.beta_grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(config_err(format!(
                    "beta_grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &beta in &self.beta_grid {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(config_err(format!("beta {beta} out of range")));
            }
            // Early width check so a bad grid fails here and not mid-run.
            CutoffSpec::for_beta(self.delta_rule.width(beta), beta)
                .map_err(|e| config_err(format!("beta {beta}: {e}")))?;
        }
        if !(self.eta1 > 0.0 && self.eta1 <= 1.0) {
            return Err(config_err(format!("eta1 {} outside (0, 1]", self.eta1)));
        }
        if !(self.eta2 > 0.0 && self.eta2 <= 1.0) {
            return Err(config_err(format!("eta2 {} outside (0, 1]", self.eta2)));
        }
        if !(self.alpha >= 0.0 && self.alpha < 0.5) {
            return Err(config_err(format!("alpha {} outside [0, 1/2)", self.alpha)));
        }
        if !(self.horizon_scale > 0.0 && self.horizon_scale.is_finite()) {
            return Err(config_err(format!("horizon_scale {} out of range", self.horizon_scale)));
        }
        if self.tk_list.is_empty() {
            return Err(config_err("tk_list must not be empty"));
        }
        let nf_n = self.nf_n();
        if nf_n < 0 || nf_n > self.params.n {
            return Err(config_err(format!(
                "nf_truncation {nf_n} outside [0, {}]",
                self.params.n
            )));
        }
        for &tk in &self.tk_list {
            if tk.abs() > nf_n {
                return Err(config_err(format!("tracked mode {tk} outside |k| ≤ {nf_n}")));
            }
        }
        if self.sampler.n_samples == 0 || self.norm_samples == 0 {
            return Err(config_err("sample counts must be positive"));
        }
        Ok(())
    }

    pub fn params_at(&self, beta: f64) -> ModelParams {
        let mut p = self.params.clone();
        p.beta = beta;
        p
    }

    pub fn horizon(&self, beta: f64) -> f64 {
        self.horizon_scale * beta * beta
    }

    pub fn nf_n(&self) -> i32 {
        self.nf_truncation.unwrap_or(self.params.n)
    }
}

/// Reproducibility stamp carried by every report and CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub n: i32,
    pub dt: f64,
    pub grid_len: usize,
    pub delta_rule: String,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig) -> Self {
        Provenance {
            seed: config.sampler.seed,
            n: config.params.n,
            dt: config.integrator.dt,
            grid_len: config.params.grid_len(),
            delta_rule: delta_rule_label(&config.delta_rule),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "seed={} n={} dt={} grid_len={} delta_rule={}",
            self.seed, self.n, self.dt, self.grid_len, self.delta_rule
        )
    }
}

pub fn delta_rule_label(rule: &DeltaRule) -> String {
    match rule {
        DeltaRule::Auto => "auto(beta^-13/10)".to_string(),
        DeltaRule::Fixed(v) => format!("fixed({v})"),
    }
}

/// Rebuilds the cutoff layer of a shared base at another inverse temperature;
/// the base itself only depends on the nonlinearity and the truncation.
pub fn package_at_beta(
    base: &NormalFormBase,
    rule: DeltaRule,
    beta: f64,
) -> Result<NormalFormPackage, NormalFormError> {
    let mut b = base.clone();
    b.params.beta = beta;
    let cutoff = CutoffSpec::for_beta(rule.width(beta), beta)?;
    build_package(b, rule, cutoff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftFlag {
    Ok,
    NonFinite,
}

impl DriftFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftFlag::Ok => "ok",
            DriftFlag::NonFinite => "nonfinite",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftRecord {
    pub sample: usize,
    pub k: i32,
    pub t_horizon: f64,
    /// max over observed t of |I_k(t) − I_k(0)|·(1+k²)·β.
    pub drift_i: f64,
    /// max over observed t of |Φ_k(t) − Φ_k(0)| / ‖|ψ_k|²‖ estimate.
    pub drift_phi: f64,
    /// Log importance weight of the initial sample, for weighted statistics.
    pub log_weight: f64,
    pub flag: DriftFlag,
}

/// Everything needed to turn one initial state into drift records.
pub struct DriftContext<'a> {
    pub params: &'a ModelParams,
    pub integrator: &'a IntegratorConfig,
    pub packages: &'a BTreeMap<i32, NormalFormPackage>,
    pub phi_scales: &'a BTreeMap<i32, f64>,
    pub nf_truncation: i32,
}

fn high_mode_mass(state: &FourierState, nf_n: i32) -> f64 {
    let n = state.truncation();
    let mut total = 0.0;
    for k in -n..=n {
        if k.abs() > nf_n {
            total += state.mode(k).norm_sqr();
        }
    }
    total
}

fn running_drifts(
    ctx: &DriftContext,
    traj: &Trajectory,
) -> (BTreeMap<i32, f64>, BTreeMap<i32, f64>, f64) {
    let initial = traj.initial();
    let restrict = ctx.nf_truncation < ctx.params.n;
    let phi_initial: BTreeMap<i32, f64> = ctx
        .packages
        .iter()
        .map(|(&k, pkg)| {
            let s = if restrict { initial.restricted(ctx.nf_truncation) } else { initial.clone() };
            (k, pkg.evaluate(&s))
        })
        .collect();
    let action_initial: BTreeMap<i32, f64> =
        ctx.packages.keys().map(|&k| (k, initial.mode(k).norm_sqr())).collect();
    let mut drift_i: BTreeMap<i32, f64> = ctx.packages.keys().map(|&k| (k, 0.0)).collect();
    let mut drift_phi = drift_i.clone();
    let mut leakage = if restrict { high_mode_mass(initial, ctx.nf_truncation) } else { 0.0 };
    for snapshot in traj.snapshots.iter().skip(1) {
        for (&k, pkg) in ctx.packages {
            let di = (snapshot.mode(k).norm_sqr() - action_initial[&k]).abs();
            let slot = drift_i.get_mut(&k).unwrap();
            *slot = slot.max(di);
            let s =
                if restrict { snapshot.restricted(ctx.nf_truncation) } else { snapshot.clone() };
            let dphi = (pkg.evaluate(&s) - phi_initial[&k]).abs();
            let slot = drift_phi.get_mut(&k).unwrap();
            *slot = slot.max(dphi);
        }
        if restrict {
            leakage = leakage.max(high_mode_mass(snapshot, ctx.nf_truncation));
        }
    }
    (drift_i, drift_phi, leakage)
}

/// Integrates one initial state and normalizes its drifts; used both by the
/// ensemble run and for injected control samples. The boolean is true when
/// the integration went non-finite, in which case the drifts are NaN and the
/// records carry the flag.
pub fn drift_for_state(
    ctx: &DriftContext,
    sample_id: usize,
    log_weight: f64,
    state: &FourierState,
) -> Result<(Vec<DriftRecord>, f64, bool), DynamicsError> {
    let beta = ctx.params.beta;
    let t_horizon = ctx.integrator.t_end;
    let traj = match evolve(state, ctx.params, ctx.integrator) {
        Ok(traj) => traj,
        Err(DynamicsError::NonFinite { .. }) => {
            let records = ctx
                .packages
                .keys()
                .map(|&k| DriftRecord {
                    sample: sample_id,
                    k,
                    t_horizon,
                    drift_i: f64::NAN,
                    drift_phi: f64::NAN,
                    log_weight,
                    flag: DriftFlag::NonFinite,
                })
                .collect();
            return Ok((records, 0.0, true));
        }
        Err(e) => return Err(e),
    };
    let (drift_i, drift_phi, leakage) = running_drifts(ctx, &traj);
    let records = ctx
        .packages
        .keys()
        .map(|&k| {
            let kk = k as f64;
            let scale = ctx.phi_scales[&k];
            DriftRecord {
                sample: sample_id,
                k,
                t_horizon,
                drift_i: drift_i[&k] * (1.0 + kk * kk) * beta,
                drift_phi: drift_phi[&k] / scale,
                log_weight,
                flag: DriftFlag::Ok,
            }
        })
        .collect();
    Ok((records, leakage, false))
}

/// Importance-weighted ensemble drawn from the stream starting at
/// `first_index`; used for norm estimates that must be independent of the
/// main ensemble (which occupies indices 0..n_samples).
pub fn importance_ensemble(
    params: &ModelParams,
    seed: u64,
    first_index: u64,
    count: usize,
) -> Vec<WeightedSample> {
    sample_gaussian(params, seed, first_index, count)
        .into_iter()
        .map(|state| {
            let log_weight = log_gibbs_weight(&state, params);
            WeightedSample { state, log_weight }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaDriftRun {
    pub beta: f64,
    pub t_horizon: f64,
    pub records: Vec<DriftRecord>,
    pub nonfinite_samples: usize,
    /// ‖|ψ_k|²‖ estimates per tracked mode (also the ‖I_k‖ of the envelope).
    pub phi_scales: BTreeMap<i32, f64>,
    /// ‖{H, Φ_k}‖ estimates per tracked mode, same independent stream.
    pub phi_dot_norms: BTreeMap<i32, f64>,
    /// Mean over samples of the peak action mass above the observable's
    /// truncation; zero when the truncations agree.
    pub mean_leakage: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftExperiment {
    pub runs: Vec<BetaDriftRun>,
}

pub fn run_drift_experiment(config: &ExperimentConfig) -> Result<DriftExperiment, HarnessError> {
    config.validate()?;
    let mut nf_params = config.params.clone();
    nf_params.n = config.nf_n();
    let mut bases: BTreeMap<i32, NormalFormBase> = BTreeMap::new();
    for &tk in &config.tk_list {
        if !bases.contains_key(&tk) {
            bases.insert(tk, build_base(&nf_params, tk)?);
        }
    }
    let mut runs = Vec::with_capacity(config.beta_grid.len());
    for &beta in &config.beta_grid {
        runs.push(run_one_beta(config, &bases, beta)?);
    }
    Ok(DriftExperiment { runs })
}

fn run_one_beta(
    config: &ExperimentConfig,
    bases: &BTreeMap<i32, NormalFormBase>,
    beta: f64,
) -> Result<BetaDriftRun, HarnessError> {
    let params = config.params_at(beta);
    let mut integrator = config.integrator.clone();
    integrator.t_end = config.horizon(beta);
    integrator.validate(params.n)?;

    let mut packages = BTreeMap::new();
    for (&tk, base) in bases {
        packages.insert(tk, package_at_beta(base, config.delta_rule, beta)?);
    }

    // Norm estimates from sample indices disjoint from the ensemble's.
    let nf_params = config.params_at(beta);
    let nf_params = {
        let mut p = nf_params;
        p.n = config.nf_n();
        p
    };
    let norm_ensemble = importance_ensemble(
        &nf_params,
        config.sampler.seed,
        config.sampler.n_samples as u64,
        config.norm_samples,
    );
    let norm_lw: Vec<f64> = norm_ensemble.iter().map(|s| s.log_weight).collect();
    let mut phi_scales = BTreeMap::new();
    let mut phi_dot_norms = BTreeMap::new();
    for &tk in packages.keys() {
        let fourth: Vec<f64> = norm_ensemble
            .par_iter()
            .map(|s| s.state.mode(tk).norm_sqr().powi(2))
            .collect();
        let est = estimate_mean_of_values(&fourth, &norm_lw)?;
        phi_scales.insert(tk, est.mean.max(0.0).sqrt());
        let pkg = &packages[&tk];
        let sq: Vec<f64> = norm_ensemble
            .par_iter()
            .map(|s| {
                let v = pkg.time_derivative(&s.state);
                v * v
            })
            .collect();
        let est = estimate_mean_of_values(&sq, &norm_lw)?;
        phi_dot_norms.insert(tk, est.mean.max(0.0).sqrt());
    }

    let sampler = SamplerConfig {
        params: params.clone(),
        seed: config.sampler.seed,
        method: config.sampler.method,
        n_samples: config.sampler.n_samples,
    };
    let ensemble = sample(&sampler)?;

    let ctx = DriftContext {
        params: &params,
        integrator: &integrator,
        packages: &packages,
        phi_scales: &phi_scales,
        nf_truncation: config.nf_n(),
    };
    let per_sample: Vec<(Vec<DriftRecord>, f64, bool)> = ensemble
        .par_iter()
        .enumerate()
        .map(|(i, ws)| drift_for_state(&ctx, i, ws.log_weight, &ws.state))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::with_capacity(per_sample.len() * packages.len());
    let mut nonfinite = 0usize;
    let mut leakage_sum = 0.0;
    let mut leakage_count = 0usize;
    for (recs, leak, bad) in per_sample {
        records.extend(recs);
        if bad {
            nonfinite += 1;
        } else {
            leakage_sum += leak;
            leakage_count += 1;
        }
    }
    let mean_leakage = if leakage_count > 0 { leakage_sum / leakage_count as f64 } else { 0.0 };

    let mut provenance = Provenance::new(config);
    provenance.dt = integrator.dt;
    Ok(BetaDriftRun {
        beta,
        t_horizon: integrator.t_end,
        records,
        nonfinite_samples: nonfinite,
        phi_scales,
        phi_dot_norms,
        mean_leakage,
        provenance,
    })
}

/// Pinned-column CSV (`sample,k,T,drift_I_normalized,drift_phi_normalized,flags`)
/// with provenance comment lines on top; rerunning the same config reproduces
/// it byte for byte.
pub fn drift_csv(experiment: &DriftExperiment) -> String {
    let mut out = String::new();
    for run in &experiment.runs {
        let _ = writeln!(
            out,
            "# beta={} t_horizon={} nonfinite={} {}",
            run.beta,
            run.t_horizon,
            run.nonfinite_samples,
            run.provenance.line()
        );
    }
    out.push_str("sample,k,T,drift_I_normalized,drift_phi_normalized,flags\n");
    for run in &experiment.runs {
        for r in &run.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.sample,
                r.k,
                r.t_horizon,
                r.drift_i,
                r.drift_phi,
                r.flag.as_str()
            );
        }
    }
    out
}

/// Median under normalized importance weights: smallest value whose
/// cumulative weight reaches half.
pub fn weighted_median(values: &[f64], log_weights: &[f64]) -> f64 {
    assert_eq!(values.len(), log_weights.len());
    assert!(!values.is_empty(), "median of an empty set");
    let max_lw = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(log_weights)
        .map(|(&v, &lw)| (v, (lw - max_lw).exp()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(v, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total {
            return v;
        }
    }
    pairs.last().unwrap().0
}

/// Bootstrap standard error of the weighted median; resample r draws from
/// the stream (seed, r), so the result is independent of worker count.
pub fn bootstrap_median_stderr(
    values: &[f64],
    log_weights: &[f64],
    seed: u64,
    resamples: usize,
) -> f64 {
    assert!(resamples >= 2);
    let n = values.len();
    let medians: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut vs = Vec::with_capacity(n);
            let mut ws = Vec::with_capacity(n);
            for _ in 0..n {
                let i = (rng.random::<u64>() % n as u64) as usize;
                vs.push(values[i]);
                ws.push(log_weights[i]);
            }
            weighted_median(&vs, &ws)
        })
        .collect();
    let mean = medians.iter().sum::<f64>() / resamples as f64;
    let var =
        medians.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftMedians {
    pub beta: f64,
    pub median_i: f64,
    pub median_phi: f64,
    pub phi_le_i: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonePair {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub median_lo: f64,
    pub median_hi: f64,
    pub se_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftComparison {
    /// Mode filter the medians were computed over; None pools all tracked.
    pub k: Option<i32>,
    pub per_beta: Vec<DriftMedians>,
    pub monotone: Vec<MonotonePair>,
    pub pass: bool,
}

/// Medians of the normalized drifts per β, the Φ-beats-I ordering, and the
/// bootstrap check that the action drift does not grow with β.
pub fn compare_drift(
    experiment: &DriftExperiment,
    k: Option<i32>,
    bootstrap_seed: u64,
    resamples: usize,
) -> DriftComparison {
    let mut per_beta = Vec::new();
    let mut series: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for run in &experiment.runs {
        let mut vi = Vec::new();
        let mut vphi = Vec::new();
        let mut lw = Vec::new();
        for r in &run.records {
            if r.flag != DriftFlag::Ok {
                continue;
            }
            if let Some(kk) = k {
                if r.k != kk {
                    continue;
                }
            }
            vi.push(r.drift_i);
            vphi.push(r.drift_phi);
            lw.push(r.log_weight);
        }
        if vi.is_empty() {
            per_beta.push(DriftMedians {
                beta: run.beta,
                median_i: f64::NAN,
                median_phi: f64::NAN,
                phi_le_i: false,
            });
            continue;
        }
        let median_i = weighted_median(&vi, &lw);
        let median_phi = weighted_median(&vphi, &lw);
        per_beta.push(DriftMedians {
            beta: run.beta,
            median_i,
            median_phi,
            phi_le_i: median_phi <= median_i,
        });
        series.push((run.beta, vi, lw));
    }
    let mut monotone = Vec::new();
    for pair in series.windows(2) {
        let (beta_lo, vi_lo, lw_lo) = &pair[0];
        let (beta_hi, vi_hi, lw_hi) = &pair[1];
        let median_lo = weighted_median(vi_lo, lw_lo);
        let median_hi = weighted_median(vi_hi, lw_hi);
        let se_lo = bootstrap_median_stderr(vi_lo, lw_lo, bootstrap_seed, resamples);
        let se_hi = bootstrap_median_stderr(vi_hi, lw_hi, bootstrap_seed.wrapping_add(1), resamples);
        let se_diff = (se_lo * se_lo + se_hi * se_hi).sqrt();
        monotone.push(MonotonePair {
            beta_lo: *beta_lo,
            beta_hi: *beta_hi,
            median_lo,
            median_hi,
            se_diff,
            pass: median_hi <= median_lo + 3.0 * se_diff,
        });
    }
    let pass = per_beta.iter().all(|m| m.phi_le_i) && monotone.iter().all(|m| m.pass);
    DriftComparison { k, per_beta, monotone, pass }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeBadSet {
    pub k: i32,
    /// Weighted fraction of samples whose normalized Φ drift exceeds η₁.
    pub bad_fraction_phi: f64,
    /// Same for the raw action drift, for reference.
    pub bad_fraction_i: f64,
    /// T²‖Φ̇‖²/(η₁²‖I_k‖²) from the independent norm estimates.
    pub envelope: f64,
    pub fraction_stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BadSetReport {
    pub beta: f64,
    pub t_horizon: f64,
    pub eta1: f64,
    pub per_mode: Vec<ModeBadSet>,
    pub pass: bool,
}

/// Empirical bad-set fraction against the distribution-free envelope, per
/// tracked mode. The envelope bounds the probability that the corrected
/// observable moves by η₁ times its own size; the pass criterion allows the
/// Monte Carlo 3σ.
pub fn estimate_bad_set(run: &BetaDriftRun, eta1: f64) -> BadSetReport {
    let mut per_mode = Vec::new();
    for (&k, &scale) in &run.phi_scales {
        let mut ind_phi = Vec::new();
        let mut ind_i = Vec::new();
        let mut lw = Vec::new();
        for r in run.records.iter().filter(|r| r.k == k && r.flag == DriftFlag::Ok) {
            ind_phi.push(if r.drift_phi > eta1 { 1.0 } else { 0.0 });
            ind_i.push(if r.drift_i > eta1 { 1.0 } else { 0.0 });
            lw.push(r.log_weight);
        }
        let (bad_phi, se) = match estimate_mean_of_values(&ind_phi, &lw) {
            Ok(est) => (est.mean, est.stderr),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let bad_i = estimate_mean_of_values(&ind_i, &lw).map(|e| e.mean).unwrap_or(f64::NAN);
        let phi_dot = run.phi_dot_norms[&k];
        let envelope =
            run.t_horizon * run.t_horizon * phi_dot * phi_dot / (eta1 * eta1 * scale * scale);
        per_mode.push(ModeBadSet {
            k,
            bad_fraction_phi: bad_phi,
            bad_fraction_i: bad_i,
            envelope,
            fraction_stderr: se,
            pass: bad_phi <= envelope + 3.0 * se,
        });
    }
    let pass = per_mode.iter().all(|m| m.pass);
    BadSetReport { beta: run.beta, t_horizon: run.t_horizon, eta1, per_mode, pass }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeBudget {
    pub k: i32,
    /// Threshold on the normalized action drift: η₁(1+k²)^{1−α}.
    pub threshold: f64,
    pub bad_fraction: f64,
    /// Per-mode share of η₂, proportional to (1+k²)^{-1} over tracked modes.
    pub allowance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorollaryReport {
    pub beta: f64,
    pub alpha: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub per_mode: Vec<ModeBudget>,
    pub union_fraction: f64,
    pub sum_of_fractions: f64,
    pub union_le_sum: bool,
    pub pass: bool,
}

/// All-mode control: a sample is bad for mode k when its raw action drift
/// exceeds η₁/((1+k²)^α β); on the normalized records that threshold reads
/// η₁(1+k²)^{1−α}. The union fraction must stay below η₂ and, exactly, below
/// the sum of per-mode fractions.
pub fn corollary_all_modes(
    run: &BetaDriftRun,
    alpha: f64,
    eta1: f64,
    eta2: f64,
) -> CorollaryReport {
    let modes: Vec<i32> = run.phi_scales.keys().copied().collect();
    let weight_sum: f64 = modes.iter().map(|&k| 1.0 / (1.0 + (k as f64).powi(2))).sum();
    let thresholds: BTreeMap<i32, f64> = modes
        .iter()
        .map(|&k| {
            let kk = 1.0 + (k as f64).powi(2);
            (k, eta1 * kk.powf(1.0 - alpha))
        })
        .collect();

    let mut by_sample: BTreeMap<usize, (f64, Vec<(i32, bool)>)> = BTreeMap::new();
    for r in run.records.iter().filter(|r| r.flag == DriftFlag::Ok) {
        let entry = by_sample.entry(r.sample).or_insert_with(|| (r.log_weight, Vec::new()));
        entry.1.push((r.k, r.drift_i > thresholds[&r.k]));
    }
    let mut lw = Vec::with_capacity(by_sample.len());
    let mut union_ind = Vec::with_capacity(by_sample.len());
    let mut count_ind = Vec::with_capacity(by_sample.len());
    let mut per_mode_ind: BTreeMap<i32, Vec<f64>> =
        modes.iter().map(|&k| (k, Vec::new())).collect();
    for (_, (w, marks)) in &by_sample {
        lw.push(*w);
        let bad = marks.iter().filter(|(_, b)| *b).count();
        union_ind.push(if bad > 0 { 1.0 } else { 0.0 });
        count_ind.push(bad as f64);
        for (k, b) in marks {
            per_mode_ind.get_mut(k).unwrap().push(if *b { 1.0 } else { 0.0 });
        }
    }

    let mean = |vals: &[f64]| -> f64 {
        estimate_mean_of_values(vals, &lw).map(|e| e.mean).unwrap_or(f64::NAN)
    };
    let union_fraction = mean(&union_ind);
    let sum_of_fractions = mean(&count_ind);
    let per_mode = modes
        .iter()
        .map(|&k| ModeBudget {
            k,
            threshold: thresholds[&k],
            bad_fraction: mean(&per_mode_ind[&k]),
            allowance: eta2 / ((1.0 + (k as f64).powi(2)) * weight_sum),
        })
        .collect();
    CorollaryReport {
        beta: run.beta,
        alpha,
        eta1,
        eta2,
        per_mode,
        union_fraction,
        sum_of_fractions,
        union_le_sum: union_fraction <= sum_of_fractions,
        pass: union_fraction <= eta2,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub beta: f64,
    pub k: i32,
    pub t_horizon: f64,
    pub mean_initial: Estimate,
    pub mean_final: Estimate,
    /// Paired estimate of ⟨I_k(T) − I_k(0)⟩; stationarity means zero.
    pub mean_difference: Estimate,
    pub z: f64,
    pub pass: bool,
    pub provenance: Provenance,
}

/// Invariance smoke test: the ensemble average of I_k must look the same at
/// t = 0 and t = T. Uses the paired difference, which cancels the shared
/// sampling noise.
pub fn stationarity_check(config: &ExperimentConfig, k: i32) -> Result<StationarityReport, HarnessError> {
    config.validate()?;
    let params = config.params.clone();
    let mut integrator = config.integrator.clone();
    integrator.t_end = config.horizon(params.beta);
    integrator.observe_every = usize::MAX;
    integrator.validate(params.n)?;
    let sampler = SamplerConfig {
        params: params.clone(),
        seed: config.sampler.seed,
        method: config.sampler.method,
        n_samples: config.sampler.n_samples,
    };
    let ensemble = sample(&sampler)?;
    let finals: Vec<f64> = ensemble
        .par_iter()
        .map(|ws| {
            let traj = evolve(&ws.state, &params, &integrator)?;
            Ok(traj.last().mode(k).norm_sqr())
        })
        .collect::<Result<_, DynamicsError>>()?;
    let initials: Vec<f64> = ensemble.iter().map(|ws| ws.state.mode(k).norm_sqr()).collect();
    let lw: Vec<f64> = ensemble.iter().map(|ws| ws.log_weight).collect();
    let diffs: Vec<f64> = initials.iter().zip(&finals).map(|(a, b)| b - a).collect();
    let mean_initial = estimate_mean_of_values(&initials, &lw)?;
    let mean_final = estimate_mean_of_values(&finals, &lw)?;
    let mean_difference = estimate_mean_of_values(&diffs, &lw)?;
    let z = if mean_difference.stderr > 0.0 {
        mean_difference.mean.abs() / mean_difference.stderr
    } else {
        0.0
    };
    Ok(StationarityReport {
        beta: params.beta,
        k,
        t_horizon: integrator.t_end,
        mean_initial,
        mean_final,
        mean_difference,
        z,
        pass: z <= 3.0,
        provenance: Provenance::new(config),
    })
}
