//! Monte-Carlo comparison of the IPW and g-computation estimators.
//!
//! Data follow a Weibull proportional-hazards design with six baseline
//! covariates (three Bernoulli(0.5), three standard normal), a logistic
//! exposure model and uniform censoring. Each replicate is generated from
//! its own ChaCha8 stream `(seed, replicate)`, and each replicate's
//! bootstrap from a seed derived from the same pair, so a scenario's output
//! is a pure function of its configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate, Method};
use crate::inference::{bootstrap_many, BootstrapConfig, BootstrapResult, CiMethod};
use crate::regression::fit_cox;
use crate::survival::{kaplan_meier, rmst_difference, select_tau};

pub const WEIBULL_SCALE: f64 = 40.0;
pub const WEIBULL_SHAPE: f64 = 2.0;
pub const DEFAULT_TAU_FRACTION: f64 = 0.10;

pub const COVARIATE_NAMES: [&str; 6] = ["L1", "L2", "L3", "L4", "L5", "L6"];

/// Exposure intercept `-log(3) / 2`. The covariate part of the exposure
/// logit is symmetric about its mean `log(3) / 2`, so this intercept gives a
/// prevalence of exactly one half.
pub fn exposure_intercept() -> f64 {
    -0.5 * 3f64.ln()
}

/// Exposure log-odds coefficients for `L1..L6`.
pub fn exposure_coefficients() -> [f64; 6] {
    [0.0, 2f64.ln(), 1.5f64.ln(), 0.0, 1.5f64.ln(), 2f64.ln()]
}

/// Outcome log hazard ratios for `L1..L6`.
pub fn outcome_coefficients() -> [f64; 6] {
    [1.8f64.ln(), 1.3f64.ln(), 0.0, 1.8f64.ln(), 1.3f64.ln(), 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSet {
    /// `(L1, L2, L4, L5)`, every cause of the outcome.
    RiskFactors,
    /// `(L2, L5)`, the common causes of exposure and outcome.
    Confounders,
}

impl CovariateSet {
    pub fn indices(self) -> &'static [usize] {
        match self {
            CovariateSet::RiskFactors => &[0, 1, 3, 4],
            CovariateSet::Confounders => &[1, 4],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CovariateSet::RiskFactors => "risk_factors",
            CovariateSet::Confounders => "confounders",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    LogAhr,
    RmstDiff,
}

impl Estimand {
    pub const ALL: [Estimand; 2] = [Estimand::LogAhr, Estimand::RmstDiff];

    pub fn label(self) -> &'static str {
        match self {
            Estimand::LogAhr => "log_ahr",
            Estimand::RmstDiff => "rmst_diff",
        }
    }
}

/// How exposure is assigned when generating data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureModel {
    /// Logistic in `L2, L3, L5, L6`.
    Confounded,
    /// Bernoulli(0.5), independent of every covariate.
    Randomized,
}

fn default_sets() -> Vec<CovariateSet> {
    vec![CovariateSet::RiskFactors, CovariateSet::Confounders]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_replicates() -> usize {
    1000
}

fn default_bootstrap() -> usize {
    500
}

fn default_level() -> f64 {
    0.95
}

fn default_tau_fraction() -> f64 {
    DEFAULT_TAU_FRACTION
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Log hazard ratio of exposure: `0` under the null, `log 1.3` otherwise.
    pub gamma: f64,
    /// Upper bound of the uniform censoring distribution.
    pub censor_max: f64,
    #[serde(default = "default_sets")]
    pub covariate_sets: Vec<CovariateSet>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_b: usize,
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_tau_fraction")]
    pub tau_fraction: f64,
}

impl ScenarioConfig {
    /// Alternative-hypothesis scenario with the default covariate sets,
    /// methods and replicate counts.
    pub fn new(n: usize, gamma: f64, censor_max: f64, seed: u64) -> Self {
        Self {
            n,
            gamma,
            censor_max,
            covariate_sets: default_sets(),
            methods: default_methods(),
            replicates: default_replicates(),
            bootstrap_b: default_bootstrap(),
            seed,
            level: default_level(),
            tau_fraction: default_tau_fraction(),
        }
    }

    /// Lists every offending field.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut bad = Vec::new();
        if self.n < 2 {
            bad.push(format!("n: must be >= 2, got {}", self.n));
        }
        if !self.gamma.is_finite() {
            bad.push("gamma: must be finite".to_string());
        }
        if !(self.censor_max > 0.0 && self.censor_max.is_finite()) {
            bad.push(format!("censor_max: must be > 0, got {}", self.censor_max));
        }
        if self.replicates < 1 {
            bad.push("replicates: must be >= 1".to_string());
        }
        if self.bootstrap_b < 2 {
            bad.push(format!("bootstrap_b: must be >= 2, got {}", self.bootstrap_b));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            bad.push(format!("level: must be in (0, 1), got {}", self.level));
        }
        if !(self.tau_fraction > 0.0 && self.tau_fraction <= 1.0) {
            bad.push(format!("tau_fraction: must be in (0, 1], got {}", self.tau_fraction));
        }
        if self.covariate_sets.is_empty() {
            bad.push("covariate_sets: must not be empty".to_string());
        }
        if self.methods.is_empty() {
            bad.push("methods: must not be empty".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

/// Large-sample values of the estimands for one `(gamma, censor_max)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub gamma: f64,
    pub censor_max: f64,
    pub log_ahr: f64,
    pub rmst_diff: f64,
    pub tau: f64,
}

impl Truth {
    pub fn value(&self, estimand: Estimand) -> f64 {
        match estimand {
            Estimand::LogAhr => self.log_ahr,
            Estimand::RmstDiff => self.rmst_diff,
        }
    }
}

fn inv_logit(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Draws `n` subjects from stream `stream` of `seed`.
pub fn generate(n: usize, gamma: f64, censor_max: f64, seed: u64, stream: u64, exposure: ExposureModel) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let names = COVARIATE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut data = SurvivalDataset::with_capacity(names, n);
    let alpha = exposure_coefficients();
    let beta = outcome_coefficients();
    let mut l = [0.0f64; 6];
    for _ in 0..n {
        for v in l.iter_mut().take(3) {
            *v = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        }
        for v in l.iter_mut().skip(3) {
            *v = rng.sample(StandardNormal);
        }
        let u_exposure: f64 = rng.random();
        let a = match exposure {
            ExposureModel::Confounded => {
                let eta = exposure_intercept() + alpha.iter().zip(&l).map(|(c, x)| c * x).sum::<f64>();
                u_exposure < inv_logit(eta)
            }
            ExposureModel::Randomized => u_exposure < 0.5,
        };
        let lp = if a { gamma } else { 0.0 } + beta.iter().zip(&l).map(|(c, x)| c * x).sum::<f64>();
        // inverse of S(t) = exp(-(t / scale)^shape * exp(lp))
        let u: f64 = rng.random();
        let latent = WEIBULL_SCALE * (-(1.0 - u).ln() * (-lp).exp()).powf(1.0 / WEIBULL_SHAPE);
        let censor = censor_max * rng.random::<f64>();
        let event = latent <= censor;
        data.push(latent.min(censor), event, a, &l)
            .expect("generated rows are valid");
    }
    data
}

/// Dataset `replicate_index` of a scenario.
pub fn generate_dataset(config: &ScenarioConfig, replicate_index: u64) -> SurvivalDataset {
    generate(
        config.n,
        config.gamma,
        config.censor_max,
        config.seed,
        replicate_index,
        ExposureModel::Confounded,
    )
}

/// Estimands computed on large datasets with randomised exposure: log-AHR
/// from a univariate Cox model, RMST difference from Kaplan-Meier curves at
/// the at-risk horizon `tau`. Averaged over `repeats` datasets.
pub fn theoretical_truth(gamma: f64, censor_max: f64, n_large: usize, seed: u64, repeats: usize) -> Result<Truth> {
    if n_large < 2 || repeats == 0 {
        return Err(Error::InvalidInput("truth needs n >= 2 and at least one repeat".into()));
    }
    if !(censor_max > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput("truth needs finite gamma and censor_max > 0".into()));
    }
    let parts: Vec<Result<(f64, f64, f64)>> = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate(n_large, gamma, censor_max, seed, r, ExposureModel::Randomized);
            let tau = select_tau(&data, DEFAULT_TAU_FRACTION)?;
            let cox = fit_cox(&data, true, &[], None)?;
            let s1 = kaplan_meier(&data, true)?;
            let s0 = kaplan_meier(&data, false)?;
            Ok((cox.coefficients[0], rmst_difference(&s1, &s0, tau)?, tau))
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let m = parts.len() as f64;
    Ok(Truth {
        gamma,
        censor_max,
        log_ahr: parts.iter().map(|p| p.0).sum::<f64>() / m,
        rmst_diff: parts.iter().map(|p| p.1).sum::<f64>() / m,
        tau: parts.iter().map(|p| p.2).sum::<f64>() / m,
    })
}

/// Bootstrap summary of one estimator on one replicate dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateDraw {
    pub estimate: f64,
    pub sd: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl From<&BootstrapResult> for ReplicateDraw {
    fn from(b: &BootstrapResult) -> Self {
        Self {
            estimate: b.point,
            sd: b.sd,
            ci_lower: b.ci_lower,
            ci_upper: b.ci_upper,
        }
    }
}

/// Performance of one (method, covariate set, estimand) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCell {
    pub method: Method,
    pub covariate_set: CovariateSet,
    pub estimand: Estimand,
    pub truth: f64,
    pub replicates: usize,
    pub failures: usize,
    pub convergence_failure_pct: f64,
    pub convergence_failure_se: f64,
    pub mab: f64,
    pub mab_se: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub empirical_sd: f64,
    pub mean_estimated_sd: f64,
    pub veb_pct: f64,
    pub veb_se: f64,
    pub coverage_pct: f64,
    pub coverage_se: f64,
    /// Share of intervals excluding 0: type I error under the null, power
    /// otherwise.
    pub rejection_pct: f64,
    pub rejection_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub n: usize,
    pub gamma: f64,
    pub censor_max: f64,
    pub replicates: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub truth: Truth,
    pub cells: Vec<MetricCell>,
}

impl MetricsTable {
    pub fn is_null(&self) -> bool {
        self.gamma == 0.0
    }

    pub fn cell(&self, method: Method, set: CovariateSet, estimand: Estimand) -> Option<&MetricCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.covariate_set == set && c.estimand == estimand)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn binomial_pct(hits: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / total as f64;
    (100.0 * p, 100.0 * (p * (1.0 - p) / total as f64).sqrt())
}

/// `100 (mean(sd_hat) / sd(estimates) - 1)` and its leave-one-out
/// jackknife standard error.
pub fn variance_estimation_bias(estimates: &[f64], sd_hat: &[f64]) -> (f64, f64) {
    let r = estimates.len();
    if r < 3 {
        return (f64::NAN, f64::NAN);
    }
    let rf = r as f64;
    let centre = mean(estimates);
    let dev: Vec<f64> = estimates.iter().map(|x| x - centre).collect();
    let s1: f64 = dev.iter().sum();
    let s2: f64 = dev.iter().map(|d| d * d).sum();
    let sd_sum: f64 = sd_hat.iter().sum();
    let veb = |s1: f64, s2: f64, sd_sum: f64, m: f64| {
        let var = (s2 - s1 * s1 / m) / (m - 1.0);
        100.0 * ((sd_sum / m) / var.sqrt() - 1.0)
    };
    let full = veb(s1, s2, sd_sum, rf);
    let loo: Vec<f64> = (0..r)
        .map(|i| veb(s1 - dev[i], s2 - dev[i] * dev[i], sd_sum - sd_hat[i], rf - 1.0))
        .collect();
    let loo_mean = mean(&loo);
    let se = ((rf - 1.0) / rf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    (full, se)
}

/// Aggregates per-replicate draws (`None` = failure) into one cell.
pub fn summarize_cell(
    method: Method,
    covariate_set: CovariateSet,
    estimand: Estimand,
    truth: f64,
    draws: &[Option<ReplicateDraw>],
) -> MetricCell {
    let total = draws.len();
    let ok: Vec<ReplicateDraw> = draws.iter().flatten().copied().collect();
    let failures = total - ok.len();
    let (fail_pct, fail_se) = binomial_pct(failures, total);
    let m = ok.len();
    let est: Vec<f64> = ok.iter().map(|d| d.estimate).collect();
    let err: Vec<f64> = est.iter().map(|e| e - truth).collect();
    let sq_err: Vec<f64> = err.iter().map(|e| e * e).collect();
    let sds: Vec<f64> = ok.iter().map(|d| d.sd).collect();
    let root_m = (m as f64).sqrt();
    let covered = ok.iter().filter(|d| d.ci_lower <= truth && truth <= d.ci_upper).count();
    let rejected = ok.iter().filter(|d| d.ci_lower > 0.0 || d.ci_upper < 0.0).count();
    let (coverage_pct, coverage_se) = binomial_pct(covered, m);
    let (rejection_pct, rejection_se) = binomial_pct(rejected, m);
    let (veb_pct, veb_se) = variance_estimation_bias(&est, &sds);
    MetricCell {
        method,
        covariate_set,
        estimand,
        truth,
        replicates: total,
        failures,
        convergence_failure_pct: fail_pct,
        convergence_failure_se: fail_se,
        mab: mean(&err),
        mab_se: sd(&est) / root_m,
        mse: mean(&sq_err),
        mse_se: sd(&sq_err) / root_m,
        empirical_sd: sd(&est),
        mean_estimated_sd: mean(&sds),
        veb_pct,
        veb_se,
        coverage_pct,
        coverage_se,
        rejection_pct,
        rejection_se,
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bootstrap seed of replicate `r`, distinct from the data-generation key.
pub fn bootstrap_seed(seed: u64, replicate: u64) -> u64 {
    mix(mix(seed ^ 0xB007_5EED) ^ replicate)
}

/// Estimator signature used by the scenario engine: returns
/// `[log_ahr, rmst_diff]` for a method, dataset, covariate subset and tau.
pub type ScenarioEstimator = dyn Fn(Method, &SurvivalDataset, &[usize], f64) -> Result<[f64; 2]> + Sync;

fn causal_estimator(method: Method, data: &SurvivalDataset, subset: &[usize], tau: f64) -> Result<[f64; 2]> {
    let e = estimate(method, data, subset, tau)?;
    Ok([e.log_ahr, e.rmst_diff])
}

/// Runs a scenario with the IPW and g-computation estimators.
pub fn run_scenario(config: &ScenarioConfig, truth: &Truth) -> Result<MetricsTable> {
    run_scenario_with(config, truth, &causal_estimator)
}

/// Runs a scenario with a caller-supplied estimator. Inside every bootstrap
/// replicate tau is re-selected from the resample, so the whole procedure
/// is resampled.
pub fn run_scenario_with(config: &ScenarioConfig, truth: &Truth, estimator: &ScenarioEstimator) -> Result<MetricsTable> {
    config
        .validate()
        .map_err(|fields| Error::InvalidInput(fields.join("; ")))?;
    if truth.gamma != config.gamma || truth.censor_max != config.censor_max {
        return Err(Error::InvalidInput(format!(
            "truth was computed for gamma {} / censor_max {}, scenario has {} / {}",
            truth.gamma, truth.censor_max, config.gamma, config.censor_max
        )));
    }
    let cells: Vec<(Method, CovariateSet)> = config
        .methods
        .iter()
        .flat_map(|&m| config.covariate_sets.iter().map(move |&s| (m, s)))
        .collect();

    // per replicate, per cell: draws for [log_ahr, rmst_diff]
    let outcomes: Vec<Vec<Option<[ReplicateDraw; 2]>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_dataset(config, r);
            let boot = BootstrapConfig {
                replicates: config.bootstrap_b,
                seed: bootstrap_seed(config.seed, r),
                level: config.level,
                ci: CiMethod::Percentile,
            };
            cells
                .iter()
                .map(|&(method, set)| {
                    let run = |d: &SurvivalDataset| -> Result<Vec<f64>> {
                        let tau = select_tau(d, config.tau_fraction)?;
                        Ok(estimator(method, d, set.indices(), tau)?.to_vec())
                    };
                    bootstrap_many(&data, run, &boot)
                        .ok()
                        .map(|res| [ReplicateDraw::from(&res[0]), ReplicateDraw::from(&res[1])])
                })
                .collect()
        })
        .collect();

    let mut metric_cells = Vec::new();
    for (c, &(method, set)) in cells.iter().enumerate() {
        for (k, estimand) in Estimand::ALL.into_iter().enumerate() {
            let draws: Vec<Option<ReplicateDraw>> = outcomes.iter().map(|o| o[c].map(|d| d[k])).collect();
            metric_cells.push(summarize_cell(method, set, estimand, truth.value(estimand), &draws));
        }
    }
    Ok(MetricsTable {
        n: config.n,
        gamma: config.gamma,
        censor_max: config.censor_max,
        replicates: config.replicates,
        bootstrap_b: config.bootstrap_b,
        seed: config.seed,
        truth: *truth,
        cells: metric_cells,
    })
}
