//! Causal contrasts for right-censored survival data.
//!
//! Two confounder-adjusted estimators of the average hazard ratio and the
//! restricted-mean-survival-time difference are provided:
//!
//! - inverse probability weighting: stabilised propensity weights feeding a
//!   weighted Kaplan-Meier curve per exposure group and a weighted
//!   univariate Cox model;
//! - g-computation: a Cox outcome model whose predictions are averaged over
//!   the whole sample under each forced exposure level.
//!
//! Interval estimation is by nonparametric bootstrap of the whole
//! procedure ([`inference`]). [`simulation`] generates Weibull
//! proportional-hazards data and scores both estimators over many
//! replicates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod estimators;
pub mod inference;
pub mod error;
pub mod regression;
pub mod simulation;
pub mod survival;

pub use data::{Observation, SurvivalDataset};
pub use error::{Error, Result};
