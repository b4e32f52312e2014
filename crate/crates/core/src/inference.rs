//! Nonparametric bootstrap of an entire estimation procedure.
//!
//! Replicate `b` draws its row indices from a ChaCha8 stream keyed by
//! `(seed, b)`, so results do not depend on scheduling or thread count.
//! Replicates whose estimator fails are skipped and counted, never retried.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// More failed replicates than this fraction of `B` aborts the bootstrap.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    #[default]
    Percentile,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    #[serde(default)]
    pub ci: CiMethod,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
            level: 0.95,
            ci: CiMethod::Percentile,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidInput(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub replicates: Vec<f64>,
    pub failures: usize,
    pub sd: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl BootstrapResult {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Row indices of bootstrap replicate `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn sample_sd(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    if values.len() < 2 || values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / m;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (m - 1.0)).sqrt()
}

/// 1-based rank `ceil(x)` guarded against representation error in `x`.
fn order_rank(x: f64, m: usize) -> usize {
    ((x - 1e-9).ceil() as usize).clamp(1, m)
}

/// Summarises replicate values around a full-sample point estimate.
pub fn summarize(point: f64, mut replicates: Vec<f64>, failures: usize, level: f64, method: CiMethod) -> BootstrapResult {
    let sd = sample_sd(&replicates);
    let alpha = 1.0 - level;
    let (ci_lower, ci_upper) = match method {
        CiMethod::Percentile => {
            replicates.sort_by(f64::total_cmp);
            let m = replicates.len();
            let lo = order_rank(m as f64 * alpha / 2.0, m);
            let hi = order_rank(m as f64 * (1.0 - alpha / 2.0), m);
            (replicates[lo - 1], replicates[hi - 1])
        }
        CiMethod::Normal => {
            let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
            (point - z * sd, point + z * sd)
        }
    };
    BootstrapResult {
        point,
        replicates,
        failures,
        sd,
        ci_lower,
        ci_upper,
        level,
        method,
    }
}

/// Bootstraps a vector-valued estimator; one result per output component.
///
/// The estimator is re-run from scratch on every resampled dataset, so any
/// model fitting it performs is part of what gets resampled.
pub fn bootstrap_many<F>(data: &SurvivalDataset, estimator: F, config: &BootstrapConfig) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&SurvivalDataset) -> Result<Vec<f64>> + Sync,
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let point = estimator(data)?;
    let n = data.len();
    let draws: Vec<Option<Vec<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let resample = data.select_rows(&resample_indices(n, config.seed, b));
            estimator(&resample).ok().filter(|v| v.len() == point.len())
        })
        .collect();

    let failures = draws.iter().filter(|d| d.is_none()).count();
    let ok = config.replicates - failures;
    if failures as f64 > MAX_FAILURE_FRACTION * config.replicates as f64 || ok < 2 {
        return Err(Error::BootstrapUnstable {
            failed: failures,
            total: config.replicates,
        });
    }
    let draws: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    Ok(point
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let reps = draws.iter().map(|d| d[k]).collect();
            summarize(p, reps, failures, config.level, config.ci)
        })
        .collect())
}

/// Bootstraps a scalar estimator.
pub fn bootstrap<F>(data: &SurvivalDataset, estimator: F, config: &BootstrapConfig) -> Result<BootstrapResult>
where
    F: Fn(&SurvivalDataset) -> Result<f64> + Sync,
{
    let mut out = bootstrap_many(data, |d| estimator(d).map(|v| vec![v]), config)?;
    Ok(out.pop().expect("one component"))
}
