//! Inverse probability weighting and g-computation estimators of the
//! log average hazard ratio and the RMST difference.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::regression::{fit_cox, fit_logistic, predict_ps, FittedCox};
use crate::survival::{build_risk_table, rmst_difference, weighted_km, StepSurvival};

/// Propensity scores outside `[PS_BOUND, 1 - PS_BOUND]` violate positivity.
pub const PS_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "GC")]
    Gc,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ipw, Method::Gc];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ipw => "IPW",
            Method::Gc => "GC",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipw" => Ok(Method::Ipw),
            "gc" => Ok(Method::Gc),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Propensity scores and stabilised weights
/// `w_i = P(A = a_i) / P(A = a_i | L_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityWeights {
    pub ps: Vec<f64>,
    pub weights: Vec<f64>,
    pub prevalence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl PropensityWeights {
    pub fn summary(&self) -> WeightSummary {
        let n = self.weights.len() as f64;
        WeightSummary {
            min: self.weights.iter().cloned().fold(f64::INFINITY, f64::min),
            max: self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: self.weights.iter().sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Diagnostics {
    Weights(WeightSummary),
    QModel {
        coefficients: Vec<f64>,
        iterations: usize,
    },
}

/// Point estimates from one estimator on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEstimate {
    pub method: Method,
    pub covariate_set: Vec<usize>,
    pub log_ahr: f64,
    pub rmst_diff: f64,
    pub tau: f64,
    pub survival_exposed: StepSurvival,
    pub survival_unexposed: StepSurvival,
    pub diagnostics: Diagnostics,
}

/// Piecewise-constant hazard: `hazards[j]` applies on `(times[j-1], times[j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardCurve {
    pub times: Vec<f64>,
    pub hazards: Vec<f64>,
}

impl HazardCurve {
    /// Hazard of the grid interval containing `t`, `None` past the grid.
    pub fn at(&self, t: f64) -> Option<f64> {
        let j = self.times.partition_point(|&x| x < t);
        self.hazards.get(j).copied()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("tau must be positive, got {tau}")))
    }
}

fn check_positivity(ps: &[f64]) -> Result<()> {
    match ps.iter().find(|&&p| !(PS_BOUND..=1.0 - PS_BOUND).contains(&p)) {
        Some(&bad) => Err(Error::Positivity(bad)),
        None => Ok(()),
    }
}

/// Fits a logistic propensity model of exposure on the selected covariates
/// and forms stabilised weights with the sample exposure prevalence.
pub fn stabilized_weights(data: &SurvivalDataset, covariate_subset: &[usize]) -> Result<PropensityWeights> {
    data.check_covariate_subset(covariate_subset)?;
    let n = data.len();
    let exposed = data.group_size(true);
    if exposed == 0 || exposed == n {
        return Err(Error::EmptyGroup);
    }
    let prevalence = exposed as f64 / n as f64;

    let ps = if covariate_subset.is_empty() {
        // intercept-only maximum likelihood is the sample prevalence
        vec![prevalence; n]
    } else {
        let k = covariate_subset.len() + 1;
        let x = DMatrix::from_fn(n, k, |i, j| {
            if j == 0 {
                1.0
            } else {
                data.covariates(i)[covariate_subset[j - 1]]
            }
        });
        let fit = fit_logistic(&x, data.exposures(), None)?;
        predict_ps(&fit, &x)?
    };

    check_positivity(&ps)?;
    let weights = ps
        .iter()
        .zip(data.exposures())
        .map(|(&p, &a)| {
            if a {
                prevalence / p
            } else {
                (1.0 - prevalence) / (1.0 - p)
            }
        })
        .collect();
    Ok(PropensityWeights {
        ps,
        weights,
        prevalence,
    })
}

/// Weighted Kaplan-Meier curves per exposure group, log-AHR from a weighted
/// Cox model with exposure as the only regressor.
pub fn ipw_estimate(data: &SurvivalDataset, covariate_subset: &[usize], tau: f64) -> Result<CausalEstimate> {
    check_tau(tau)?;
    let pw = stabilized_weights(data, covariate_subset)?;
    let summary = pw.summary();
    if (summary.mean - 1.0).abs() > 0.1 {
        log::warn!(
            "mean stabilised weight {:.3} is far from 1; the propensity model may be misspecified",
            summary.mean
        );
    }

    let mut curves = Vec::with_capacity(2);
    for group in [true, false] {
        let table = build_risk_table(data, &pw.weights, group)?;
        if table.times.is_empty() {
            return Err(Error::NoEvents);
        }
        curves.push(weighted_km(&table)?);
    }
    let survival_unexposed = curves.pop().expect("two curves");
    let survival_exposed = curves.pop().expect("two curves");

    let cox = fit_cox(data, true, &[], Some(&pw.weights))?;
    let rmst_diff = rmst_difference(&survival_exposed, &survival_unexposed, tau)?;
    Ok(CausalEstimate {
        method: Method::Ipw,
        covariate_set: covariate_subset.to_vec(),
        log_ahr: cox.coefficients[0],
        rmst_diff,
        tau,
        survival_exposed,
        survival_unexposed,
        diagnostics: Diagnostics::Weights(summary),
    })
}

/// Marginal survival under `do(A = a)`: the average over every subject of
/// `exp(-H0(t) exp(gamma a + beta' L_i))` on the baseline's event-time grid.
pub fn counterfactual_survival(qmodel: &FittedCox, data: &SurvivalDataset, a: bool) -> Result<StepSurvival> {
    if let Some(&max) = qmodel.covariate_subset.iter().max() {
        if max >= data.n_covariates() {
            return Err(Error::DimensionMismatch {
                expected: max + 1,
                got: data.n_covariates(),
            });
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let grid = &qmodel.baseline;
    let shift = if a { qmodel.exposure_effect() } else { 0.0 };

    // rows repeated by resampling share a linear predictor; evaluate each once
    let mut eta: Vec<f64> = (0..data.len())
        .map(|i| qmodel.covariate_predictor(data.covariates(i)))
        .collect();
    eta.sort_by(f64::total_cmp);

    let mut acc = vec![0.0; grid.times.len()];
    let mut k = 0;
    while k < eta.len() {
        let value = eta[k];
        let mut count = 0usize;
        while k < eta.len() && eta[k] == value {
            count += 1;
            k += 1;
        }
        let c = count as f64;
        let risk = (shift + value).exp();
        for (s, &h) in acc.iter_mut().zip(&grid.values) {
            *s += c * (-h * risk).exp();
        }
    }
    let n = data.len() as f64;
    let probs = acc.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect();
    StepSurvival::new(grid.times.clone(), probs)
}

/// Backward log-difference hazard on the curve's own grid, starting from
/// `S(0) = 1`.
pub fn hazard_from_survival(surv: &StepSurvival) -> Result<HazardCurve> {
    let mut hazards = Vec::with_capacity(surv.len());
    let mut prev_t = 0.0;
    let mut prev_log = 0.0;
    for (&t, &s) in surv.times().iter().zip(surv.probs()) {
        if !(s > 0.0) {
            return Err(Error::HazardUndefined);
        }
        if !(t > prev_t) {
            return Err(Error::InvalidInput(
                "hazard needs a grid starting after time 0".into(),
            ));
        }
        let log_s = s.ln();
        hazards.push(-(log_s - prev_log) / (t - prev_t));
        prev_t = t;
        prev_log = log_s;
    }
    Ok(HazardCurve {
        times: surv.times().to_vec(),
        hazards,
    })
}

/// `log` of the mean, over observed events, of `lambda1(t_i) / lambda0(t_i)`.
pub fn average_hazard_ratio(lambda1: &HazardCurve, lambda0: &HazardCurve, data: &SurvivalDataset) -> Result<f64> {
    let mut total = 0.0;
    let mut events = 0usize;
    for i in (0..data.len()).filter(|&i| data.event(i)) {
        let t = data.time(i);
        let (Some(h1), Some(h0)) = (lambda1.at(t), lambda0.at(t)) else {
            return Err(Error::InvalidInput(format!(
                "event time {t} lies beyond the hazard grid"
            )));
        };
        if !(h0 > 0.0) {
            return Err(Error::HazardUndefined);
        }
        total += h1 / h0;
        events += 1;
    }
    if events == 0 {
        return Err(Error::NoEvents);
    }
    Ok((total / events as f64).ln())
}

/// Cox Q-model with exposure and the selected covariates, standardised
/// counterfactual survival curves, and the event-averaged hazard ratio.
pub fn gcomp_estimate(data: &SurvivalDataset, covariate_subset: &[usize], tau: f64) -> Result<CausalEstimate> {
    check_tau(tau)?;
    if data.group_size(true) == 0 || data.group_size(false) == 0 {
        return Err(Error::EmptyGroup);
    }
    let qmodel = fit_cox(data, true, covariate_subset, None)?;
    let survival_exposed = counterfactual_survival(&qmodel, data, true)?;
    let survival_unexposed = counterfactual_survival(&qmodel, data, false)?;
    let log_ahr = average_hazard_ratio(
        &hazard_from_survival(&survival_exposed)?,
        &hazard_from_survival(&survival_unexposed)?,
        data,
    )?;
    let rmst_diff = rmst_difference(&survival_exposed, &survival_unexposed, tau)?;
    Ok(CausalEstimate {
        method: Method::Gc,
        covariate_set: covariate_subset.to_vec(),
        log_ahr,
        rmst_diff,
        tau,
        survival_exposed,
        survival_unexposed,
        diagnostics: Diagnostics::QModel {
            coefficients: qmodel.coefficients,
            iterations: qmodel.iterations,
        },
    })
}

pub fn estimate(method: Method, data: &SurvivalDataset, covariate_subset: &[usize], tau: f64) -> Result<CausalEstimate> {
    match method {
        Method::Ipw => ipw_estimate(data, covariate_subset, tau),
        Method::Gc => gcomp_estimate(data, covariate_subset, tau),
    }
}
