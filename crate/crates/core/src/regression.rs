//! Weighted logistic regression and weighted Cox proportional-hazards
//! regression (Breslow ties, Breslow baseline), both fitted by
//! Newton-Raphson with step-halving.
//!
//! Convergence is declared when the score max-norm per unit of total weight
//! drops below [`TOLERANCE`], or when the Newton step max-norm does. Design
//! columns are centred (and for logistic, scaled) internally; reported
//! coefficients are always on the natural covariate scale.

use nalgebra::{DMatrix, DVector};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

/// Standardised coefficients beyond this magnitude are treated as divergent.
const DIVERGENCE_LIMIT: f64 = 30.0;
const MAX_HALVINGS: usize = 40;

fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) if w.len() != n => Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        }),
        Some(w) if w.iter().any(|x| !x.is_finite() || *x < 0.0) => Err(Error::InvalidInput(
            "weights must be finite and non-negative".into(),
        )),
        Some(w) => Ok(w.to_vec()),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `info * x = rhs` for symmetric positive-definite `info`.
fn spd_solve(info: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = info.clone().cholesky().ok_or(Error::Singular)?;
    let x = chol.solve(rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular)
    }
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

/// Fitted propensity-score model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogistic {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl FittedLogistic {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Weighted Bernoulli log-likelihood and its gradient at `beta`, where `x`
/// includes the intercept column and `beta[0]` is the intercept.
pub fn logistic_log_likelihood(
    x: &DMatrix<f64>,
    y: &[bool],
    weights: Option<&[f64]>,
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if beta.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: beta.len() });
    }
    let w = check_weights(weights, n)?;
    let mut ll = 0.0;
    let mut grad = vec![0.0; k];
    for i in 0..n {
        let eta: f64 = (0..k).map(|j| x[(i, j)] * beta[j]).sum();
        let yi = if y[i] { 1.0 } else { 0.0 };
        ll += w[i] * (yi * eta - softplus(eta));
        let r = w[i] * (yi - inv_logit(eta));
        for (j, g) in grad.iter_mut().enumerate() {
            *g += r * x[(i, j)];
        }
    }
    Ok((ll, grad))
}

/// Maximum-likelihood logistic regression. Column 0 of `x` must be the
/// intercept column of ones.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool], weights: Option<&[f64]>) -> Result<FittedLogistic> {
    let (n, k) = x.shape();
    if k == 0 {
        return Err(Error::InvalidInput("design matrix needs an intercept column".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n <= k {
        return Err(Error::InvalidInput(format!(
            "need more observations ({n}) than parameters ({k})"
        )));
    }
    if (0..n).any(|i| x[(i, 0)] != 1.0) {
        return Err(Error::InvalidInput("column 0 must be the intercept".into()));
    }
    let w = check_weights(weights, n)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }

    // standardise covariate columns
    let mut center = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for j in 1..k {
        let mean = (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / total;
        let var = (0..n).map(|i| w[i] * (x[(i, j)] - mean).powi(2)).sum::<f64>() / total;
        if !(var > 0.0) {
            return Err(Error::Singular);
        }
        center[j] = mean;
        scale[j] = var.sqrt();
    }
    let z = DMatrix::from_fn(n, k, |i, j| (x[(i, j)] - center[j]) / scale[j]);
    let yv: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let evaluate = |beta: &DVector<f64>| -> (f64, DVector<f64>, DMatrix<f64>) {
        let eta = &z * beta;
        let mut ll = 0.0;
        let mut resid = DVector::zeros(n);
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let p = inv_logit(eta[i]);
            ll += w[i] * (yv[i] * eta[i] - softplus(eta[i]));
            resid[i] = w[i] * (yv[i] - p);
            let v = w[i] * p * (1.0 - p);
            for a in 0..k {
                let za = z[(i, a)] * v;
                for b in 0..=a {
                    info[(a, b)] += za * z[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        (ll, z.tr_mul(&resid), info)
    };

    let mut beta = DVector::zeros(k);
    let (mut ll, mut grad, mut info) = evaluate(&beta);
    let mut iterations = 0;
    let mut converged = max_abs(grad.as_slice()) <= TOLERANCE * total;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let step = spd_solve(&info, &grad)?;
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut next = evaluate(&candidate);
        let mut halvings = 0;
        while next.0 < ll - 1e-12 * (1.0 + ll.abs()) && halvings < MAX_HALVINGS {
            t *= 0.5;
            halvings += 1;
            candidate = &beta + &step * t;
            next = evaluate(&candidate);
        }
        let moved = max_abs(step.as_slice()) * t;
        beta = candidate;
        (ll, grad, info) = next;
        if max_abs(beta.as_slice()) > DIVERGENCE_LIMIT {
            return Err(Error::Separation);
        }
        converged = max_abs(grad.as_slice()) <= TOLERANCE * total || moved < TOLERANCE;
    }

    let coefficients: Vec<f64> = (1..k).map(|j| beta[j] / scale[j]).collect();
    let intercept = beta[0] - (1..k).map(|j| beta[j] * center[j] / scale[j]).sum::<f64>();
    if !converged {
        let mut last = vec![intercept];
        last.extend_from_slice(&coefficients);
        return Err(Error::NotConverged {
            iterations,
            coefficients: last,
        });
    }
    Ok(FittedLogistic {
        intercept,
        coefficients,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Propensity scores `expit(x * beta)` for a design laid out like the one
/// used for fitting (intercept column first).
pub fn predict_ps(fit: &FittedLogistic, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = fit.coefficients.len() + 1;
    if x.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: x.ncols(),
        });
    }
    Ok((0..x.nrows())
        .map(|i| {
            let eta = fit.intercept
                + (1..k).map(|j| fit.coefficients[j - 1] * x[(i, j)]).sum::<f64>();
            inv_logit(eta)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Cox proportional hazards
// ---------------------------------------------------------------------------

/// Breslow cumulative baseline hazard, a non-decreasing step function with
/// `H0(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeHazard {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CumulativeHazard {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedCox {
    /// Exposure effect first when `include_exposure`, then one entry per
    /// element of `covariate_subset`.
    pub coefficients: Vec<f64>,
    pub include_exposure: bool,
    pub covariate_subset: Vec<usize>,
    pub baseline: CumulativeHazard,
    pub converged: bool,
    pub iterations: usize,
    pub partial_log_likelihood: f64,
}

impl FittedCox {
    /// Exposure log hazard ratio, zero when exposure is not in the model.
    pub fn exposure_effect(&self) -> f64 {
        if self.include_exposure {
            self.coefficients[0]
        } else {
            0.0
        }
    }

    fn beta(&self) -> &[f64] {
        let skip = usize::from(self.include_exposure);
        &self.coefficients[skip..]
    }

    /// `beta' L` for a full covariate vector `L`.
    pub fn covariate_predictor(&self, covariates: &[f64]) -> f64 {
        self.covariate_subset
            .iter()
            .zip(self.beta())
            .map(|(&j, b)| b * covariates[j])
            .sum()
    }

    pub fn linear_predictor(&self, covariates: &[f64], exposure: bool) -> f64 {
        let a = if exposure { self.exposure_effect() } else { 0.0 };
        a + self.covariate_predictor(covariates)
    }
}

/// `H0(t) * exp(gamma * a + beta' L)`.
pub fn predict_cumhaz(fit: &FittedCox, covariates: &[f64], exposure: bool, t: f64) -> Result<f64> {
    if let Some(&max) = fit.covariate_subset.iter().max() {
        if covariates.len() <= max {
            return Err(Error::DimensionMismatch {
                expected: max + 1,
                got: covariates.len(),
            });
        }
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    Ok(fit.baseline.eval(t) * fit.linear_predictor(covariates, exposure).exp())
}

/// Rows sorted by decreasing time with centred design columns.
struct CoxProblem {
    k: usize,
    time: Vec<f64>,
    event: Vec<bool>,
    weight: Vec<f64>,
    /// centred, row-major `n x k`
    x: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    total_weight: f64,
}

struct CoxEval {
    ll: f64,
    grad: Vec<f64>,
    info: DMatrix<f64>,
}

impl CoxProblem {
    fn new(
        data: &SurvivalDataset,
        include_exposure: bool,
        subset: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        data.check_covariate_subset(subset)?;
        let n = data.len();
        let w = check_weights(weights, n)?;
        let k = usize::from(include_exposure) + subset.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.time(b).total_cmp(&data.time(a)));

        let mut raw = Vec::with_capacity(n * k);
        for &i in &order {
            if include_exposure {
                raw.push(if data.exposure(i) { 1.0 } else { 0.0 });
            }
            let l = data.covariates(i);
            raw.extend(subset.iter().map(|&j| l[j]));
        }
        let total_weight: f64 = w.iter().sum();
        let mut center = vec![0.0; k];
        let mut scale = vec![1.0; k];
        if total_weight > 0.0 {
            for c in 0..k {
                let mean = order
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| w[i] * raw[r * k + c])
                    .sum::<f64>()
                    / total_weight;
                let var = order
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| w[i] * (raw[r * k + c] - mean).powi(2))
                    .sum::<f64>()
                    / total_weight;
                center[c] = mean;
                scale[c] = var.sqrt();
            }
        }
        for r in 0..n {
            for c in 0..k {
                raw[r * k + c] -= center[c];
            }
        }
        Ok(Self {
            k,
            time: order.iter().map(|&i| data.time(i)).collect(),
            event: order.iter().map(|&i| data.event(i)).collect(),
            weight: order.iter().map(|&i| w[i]).collect(),
            x: raw,
            center,
            scale,
            total_weight,
        })
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.k..(r + 1) * self.k]
    }

    fn eta(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = (0..self.time.len())
            .map(|r| self.row(r).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect();
        let offset = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (eta, if offset.is_finite() { offset } else { 0.0 })
    }

    /// Breslow partial log-likelihood, score and observed information.
    fn evaluate(&self, beta: &[f64], with_info: bool) -> CoxEval {
        let k = self.k;
        let n = self.time.len();
        let (eta, offset) = self.eta(beta);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; if with_info { k * k } else { 0 }];
        let mut ll = 0.0;
        let mut grad = vec![0.0; k];
        let mut info = DMatrix::zeros(k, k);

        let mut r = 0;
        while r < n {
            let t = self.time[r];
            let mut d = 0.0;
            while r < n && self.time[r] == t {
                let w = self.weight[r];
                let x = self.row(r);
                let e = w * (eta[r] - offset).exp();
                s0 += e;
                for a in 0..k {
                    s1[a] += e * x[a];
                    if with_info {
                        for b in 0..=a {
                            s2[a * k + b] += e * x[a] * x[b];
                        }
                    }
                }
                if self.event[r] && w > 0.0 {
                    d += w;
                    ll += w * eta[r];
                    for a in 0..k {
                        grad[a] += w * x[a];
                    }
                }
                r += 1;
            }
            if d > 0.0 {
                ll -= d * (s0.ln() + offset);
                for a in 0..k {
                    let m_a = s1[a] / s0;
                    grad[a] -= d * m_a;
                    if with_info {
                        for b in 0..=a {
                            let v = s2[a * k + b] / s0 - m_a * s1[b] / s0;
                            info[(a, b)] += d * v;
                        }
                    }
                }
            }
        }
        if with_info {
            for a in 0..k {
                for b in 0..a {
                    info[(b, a)] = info[(a, b)];
                }
            }
        }
        CoxEval { ll, grad, info }
    }

    /// Breslow baseline on the natural covariate scale.
    fn baseline(&self, beta: &[f64]) -> CumulativeHazard {
        let n = self.time.len();
        let (eta, offset) = self.eta(beta);
        // beta' x_natural = eta + beta' center
        let shift: f64 = beta.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        let mut s0 = 0.0;
        let mut rev_times = Vec::new();
        let mut rev_incr = Vec::new();
        let mut r = 0;
        while r < n {
            let t = self.time[r];
            let mut d = 0.0;
            while r < n && self.time[r] == t {
                s0 += self.weight[r] * (eta[r] - offset).exp();
                if self.event[r] {
                    d += self.weight[r];
                }
                r += 1;
            }
            if d > 0.0 {
                rev_times.push(t);
                rev_incr.push(d / s0 * (-(offset + shift)).exp());
            }
        }
        let times: Vec<f64> = rev_times.into_iter().rev().collect();
        let mut cum = 0.0;
        let values = rev_incr
            .into_iter()
            .rev()
            .map(|h| {
                cum += h;
                cum
            })
            .collect();
        CumulativeHazard { times, values }
    }
}

/// Weighted Breslow partial log-likelihood and score of the Cox model at
/// `beta` (natural scale, exposure first when included).
pub fn cox_partial_likelihood(
    data: &SurvivalDataset,
    include_exposure: bool,
    covariate_subset: &[usize],
    weights: Option<&[f64]>,
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let problem = CoxProblem::new(data, include_exposure, covariate_subset, weights)?;
    if beta.len() != problem.k {
        return Err(Error::DimensionMismatch {
            expected: problem.k,
            got: beta.len(),
        });
    }
    // the partial likelihood is invariant to centring the design
    let eval = problem.evaluate(beta, false);
    Ok((eval.ll, eval.grad))
}

/// Fits `h(t | A, L) = h0(t) exp(gamma A + beta' L_subset)` by maximising the
/// weighted Breslow partial likelihood, then computes the Breslow baseline.
pub fn fit_cox(
    data: &SurvivalDataset,
    include_exposure: bool,
    covariate_subset: &[usize],
    weights: Option<&[f64]>,
) -> Result<FittedCox> {
    let problem = CoxProblem::new(data, include_exposure, covariate_subset, weights)?;
    let has_events = problem
        .event
        .iter()
        .zip(&problem.weight)
        .any(|(&e, &w)| e && w > 0.0);
    if !has_events {
        return Err(Error::NoEvents);
    }
    let k = problem.k;
    if problem.scale.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Singular);
    }

    let mut beta = vec![0.0; k];
    let mut current = problem.evaluate(&beta, true);
    let mut iterations = 0;
    let tol_score = TOLERANCE * problem.total_weight;
    let mut converged = max_abs(&current.grad) <= tol_score;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let step = spd_solve(&current.info, &DVector::from_column_slice(&current.grad))?;
        let mut t = 1.0;
        let mut candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        let mut next = problem.evaluate(&candidate, true);
        let mut halvings = 0;
        while !(next.ll >= current.ll - 1e-12 * (1.0 + current.ll.abs())) && halvings < MAX_HALVINGS {
            t *= 0.5;
            halvings += 1;
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            next = problem.evaluate(&candidate, true);
        }
        let moved = max_abs(step.as_slice()) * t;
        beta = candidate;
        current = next;
        if beta
            .iter()
            .zip(&problem.scale)
            .any(|(b, s)| (b * s).abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::Separation);
        }
        converged = max_abs(&current.grad) <= tol_score || moved < TOLERANCE;
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            coefficients: beta,
        });
    }

    let baseline = problem.baseline(&beta);
    Ok(FittedCox {
        coefficients: beta,
        include_exposure,
        covariate_subset: covariate_subset.to_vec(),
        baseline,
        converged,
        iterations,
        partial_log_likelihood: current.ll,
    })
}
