//! Right-censored survival samples with a binary exposure and baseline covariates.

use crate::error::{Error, Result};

/// One subject: follow-up time, event indicator, exposure and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
    pub exposure: bool,
    pub covariates: Vec<f64>,
}

/// A sample of `(T_i, delta_i, A_i, L_i)` stored column-wise.
///
/// Covariates are kept row-major in one buffer of `len() * n_covariates()`
/// values. Every constructor validates that times are finite and
/// non-negative and that each row carries exactly `p` covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    time: Vec<f64>,
    event: Vec<bool>,
    exposure: Vec<bool>,
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(covariate_names: Vec<String>) -> Self {
        Self {
            time: Vec::new(),
            event: Vec::new(),
            exposure: Vec::new(),
            covariates: Vec::new(),
            covariate_names,
        }
    }

    pub fn with_capacity(covariate_names: Vec<String>, n: usize) -> Self {
        let p = covariate_names.len();
        Self {
            time: Vec::with_capacity(n),
            event: Vec::with_capacity(n),
            exposure: Vec::with_capacity(n),
            covariates: Vec::with_capacity(n * p),
            covariate_names,
        }
    }

    pub fn from_observations(covariate_names: Vec<String>, rows: Vec<Observation>) -> Result<Self> {
        let mut data = Self::with_capacity(covariate_names, rows.len());
        for row in rows {
            data.push(row.time, row.event, row.exposure, &row.covariates)?;
        }
        Ok(data)
    }

    /// Builds a dataset without covariates.
    pub fn from_columns(time: &[f64], event: &[bool], exposure: &[bool]) -> Result<Self> {
        if time.len() != event.len() || time.len() != exposure.len() {
            return Err(Error::InvalidInput(
                "time, event and exposure columns differ in length".into(),
            ));
        }
        let mut data = Self::with_capacity(Vec::new(), time.len());
        for i in 0..time.len() {
            data.push(time[i], event[i], exposure[i], &[])?;
        }
        Ok(data)
    }

    pub fn push(&mut self, time: f64, event: bool, exposure: bool, covariates: &[f64]) -> Result<()> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidInput(format!(
                "time must be finite and >= 0, got {time}"
            )));
        }
        if covariates.len() != self.covariate_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_names.len(),
                got: covariates.len(),
            });
        }
        if let Some(bad) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("covariate value {bad} is not finite")));
        }
        self.time.push(time);
        self.event.push(event);
        self.exposure.push(exposure);
        self.covariates.extend_from_slice(covariates);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn times(&self) -> &[f64] {
        &self.time
    }

    pub fn events(&self) -> &[bool] {
        &self.event
    }

    pub fn exposures(&self) -> &[bool] {
        &self.exposure
    }

    pub fn time(&self, i: usize) -> f64 {
        self.time[i]
    }

    pub fn event(&self, i: usize) -> bool {
        self.event[i]
    }

    pub fn exposure(&self, i: usize) -> bool {
        self.exposure[i]
    }

    /// Covariate vector `L_i`.
    pub fn covariates(&self, i: usize) -> &[f64] {
        let p = self.n_covariates();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            time: self.time[i],
            event: self.event[i],
            exposure: self.exposure[i],
            covariates: self.covariates(i).to_vec(),
        }
    }

    /// Number of subjects with exposure level `a`.
    pub fn group_size(&self, a: bool) -> usize {
        self.exposure.iter().filter(|&&x| x == a).count()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// New dataset made of the given rows, repeats allowed.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let p = self.n_covariates();
        let mut out = Self::with_capacity(self.covariate_names.clone(), indices.len());
        for &i in indices {
            out.time.push(self.time[i]);
            out.event.push(self.event[i]);
            out.exposure.push(self.exposure[i]);
            out.covariates.extend_from_slice(&self.covariates[i * p..(i + 1) * p]);
        }
        out
    }

    /// Checks that every index in `subset` names an existing covariate.
    pub fn check_covariate_subset(&self, subset: &[usize]) -> Result<()> {
        match subset.iter().find(|&&j| j >= self.n_covariates()) {
            Some(&j) => Err(Error::InvalidInput(format!(
                "covariate index {j} out of range for {} covariates",
                self.n_covariates()
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["x".into(), "z".into()]
    }

    #[test]
    fn rejects_negative_time_and_wrong_width() {
        let mut d = SurvivalDataset::new(names());
        assert!(d.push(-1.0, true, false, &[0.0, 1.0]).is_err());
        assert!(matches!(
            d.push(1.0, true, false, &[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(d.push(f64::NAN, true, false, &[0.0, 1.0]).is_err());
        assert!(d.is_empty());
    }

    #[test]
    fn select_rows_repeats_rows() {
        let mut d = SurvivalDataset::new(names());
        d.push(1.0, true, false, &[1.0, 2.0]).unwrap();
        d.push(2.0, false, true, &[3.0, 4.0]).unwrap();
        let r = d.select_rows(&[1, 1, 0]);
        assert_eq!(r.len(), 3);
        assert_eq!(r.covariates(0), &[3.0, 4.0]);
        assert_eq!(r.covariates(2), &[1.0, 2.0]);
        assert_eq!(r.group_size(true), 2);
        assert_eq!(r.observation(1), d.observation(1));
    }
}
