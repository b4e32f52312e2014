//! Risk tables, weighted Kaplan-Meier curves, restricted mean survival time
//! and the at-risk horizon rule used to pick `tau`.
//!
//! Survival curves are right-continuous step functions: the value drops at
//! the event time itself. A subject censored at an event time is still in
//! that time's risk set (events are processed before censorings).

use serde::Serialize;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// Weighted event and at-risk counts for one exposure group, one row per
/// distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub group: bool,
    pub times: Vec<f64>,
    pub events: Vec<f64>,
    pub at_risk: Vec<f64>,
}

/// Right-continuous step survival curve with `S(t) = 1` before the first
/// grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSurvival {
    times: Vec<f64>,
    probs: Vec<f64>,
}

impl StepSurvival {
    pub fn new(times: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if times.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: probs.len(),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "survival grid must be strictly increasing".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput("survival grid times must be >= 0".into()));
        }
        if probs.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput("survival probabilities must lie in [0, 1]".into()));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("survival probabilities must be non-increasing".into()));
        }
        Ok(Self { times, probs })
    }

    /// The curve `S(t) = 1` for all `t`.
    pub fn constant_one() -> Self {
        Self {
            times: Vec::new(),
            probs: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `S(t)`, taking the value of the last grid time `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.probs[k - 1]
        }
    }
}

/// Builds the weighted risk table of exposure group `group`.
///
/// `events[j]` sums the weights of the group's events at `times[j]` and
/// `at_risk[j]` sums the weights of group members with `T_i >= times[j]`.
pub fn build_risk_table(data: &SurvivalDataset, weights: &[f64], group: bool) -> Result<RiskTable> {
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }

    let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.exposure(i) == group).collect();
    if idx.is_empty() {
        return Err(Error::EmptyGroup);
    }
    idx.sort_by(|&a, &b| data.time(a).total_cmp(&data.time(b)));

    let mut remaining: f64 = idx.iter().map(|&i| weights[i]).sum();
    let mut table = RiskTable {
        group,
        times: Vec::new(),
        events: Vec::new(),
        at_risk: Vec::new(),
    };

    let mut k = 0;
    while k < idx.len() {
        let t = data.time(idx[k]);
        let mut d = 0.0;
        let mut leaving = 0.0;
        let mut has_event = false;
        while k < idx.len() && data.time(idx[k]) == t {
            let i = idx[k];
            leaving += weights[i];
            if data.event(i) {
                has_event = true;
                d += weights[i];
            }
            k += 1;
        }
        if has_event {
            table.times.push(t);
            table.events.push(d);
            table.at_risk.push(remaining.max(d));
        }
        remaining -= leaving;
    }
    Ok(table)
}

/// Weighted product-limit estimate `S(t) = prod_{t_j <= t} (1 - d_j / Y_j)`.
pub fn weighted_km(table: &RiskTable) -> Result<StepSurvival> {
    let mut probs = Vec::with_capacity(table.times.len());
    let mut s = 1.0;
    for (&d, &y) in table.events.iter().zip(&table.at_risk) {
        if y <= 0.0 {
            return Err(Error::ZeroRiskSet);
        }
        s *= (1.0 - d / y).clamp(0.0, 1.0);
        probs.push(s);
    }
    StepSurvival::new(table.times.clone(), probs)
}

/// Area under the step curve on `[0, tau]`; the last value is carried flat
/// beyond the final grid time.
pub fn rmst(surv: &StepSurvival, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    for (&t, &s) in surv.times.iter().zip(&surv.probs) {
        if t >= tau {
            break;
        }
        area += prev_s * (t - prev_t);
        prev_t = t;
        prev_s = s;
    }
    area += prev_s * (tau - prev_t);
    Ok(area)
}

/// `rmst(s1, tau) - rmst(s0, tau)`.
pub fn rmst_difference(s1: &StepSurvival, s0: &StepSurvival, tau: f64) -> Result<f64> {
    Ok(rmst(s1, tau)? - rmst(s0, tau)?)
}

/// Largest observed time at which each exposure group still has at least
/// `ceil(fraction * group size)` subjects with `T_i >= t`.
pub fn select_tau(data: &SurvivalDataset, min_at_risk_fraction: f64) -> Result<f64> {
    if !(min_at_risk_fraction > 0.0 && min_at_risk_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "at-risk fraction must be in (0, 1], got {min_at_risk_fraction}"
        )));
    }
    let mut tau = f64::INFINITY;
    for group in [false, true] {
        let mut times: Vec<f64> = (0..data.len())
            .filter(|&i| data.exposure(i) == group)
            .map(|i| data.time(i))
            .collect();
        if times.is_empty() {
            return Err(Error::EmptyGroup);
        }
        // the k-th largest time is the last one with at least k subjects at risk
        let need = ((min_at_risk_fraction * times.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        times.sort_by(|a, b| b.total_cmp(a));
        tau = tau.min(times[need - 1]);
    }
    if tau > 0.0 {
        Ok(tau)
    } else {
        Err(Error::TauUndefined)
    }
}

/// Unit weights for `n` rows.
pub(crate) fn unit_weights(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

/// Unweighted Kaplan-Meier curve of one exposure group.
pub fn kaplan_meier(data: &SurvivalDataset, group: bool) -> Result<StepSurvival> {
    weighted_km(&build_risk_table(data, &unit_weights(data.len()), group)?)
}
