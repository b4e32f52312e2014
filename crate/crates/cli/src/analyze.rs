//! `analyze`: IPW and g-computation estimates with bootstrap intervals for a
//! user dataset.

use std::fs;
use std::path::{Path, PathBuf};

use causal_surv::estimators::{estimate, Method};
use causal_surv::inference::{bootstrap_many, BootstrapConfig, CiMethod};
use causal_surv::survival::{select_tau, StepSurvival};
use causal_surv::simulation::{Estimand, DEFAULT_TAU_FRACTION};
use causal_surv::SurvivalDataset;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::input::{read_dataset, ColumnSpec};

pub struct AnalyzeRequest {
    pub data: PathBuf,
    pub time: String,
    pub event: String,
    pub exposure: String,
    pub ps_covariates: Vec<String>,
    pub q_covariates: Vec<String>,
    pub tau: Option<f64>,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub level: f64,
    pub methods: Vec<Method>,
    pub complete_case: bool,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ResultRow {
    method: Method,
    estimand: &'static str,
    point: f64,
    sd: f64,
    ci_lower: f64,
    ci_upper: f64,
    tau: f64,
    #[serde(rename = "B")]
    bootstrap_b: usize,
    seed: u64,
}

#[derive(Serialize)]
struct CurveRow {
    time: f64,
    s1: f64,
    s0: f64,
}

fn union_grid(a: &StepSurvival, b: &StepSurvival) -> Vec<f64> {
    let mut grid: Vec<f64> = a.times().iter().chain(b.times()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn dedup_names(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

fn indices_of(data: &SurvivalDataset, names: &[String]) -> Vec<usize> {
    names
        .iter()
        .map(|n| data.covariate_index(n).expect("column loaded"))
        .collect()
}

pub fn run(req: &AnalyzeRequest) -> CliResult<()> {
    if !(req.level > 0.0 && req.level < 1.0) {
        return Err(CliError::Input(format!("--level must be in (0, 1), got {}", req.level)));
    }
    if req.bootstrap_b < 2 {
        return Err(CliError::Input(format!("--B must be at least 2, got {}", req.bootstrap_b)));
    }
    if let Some(t) = req.tau {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Input(format!("--tau must be positive, got {t}")));
        }
    }
    let methods: Vec<Method> = req.methods.iter().fold(Vec::new(), |mut acc, m| {
        if !acc.contains(m) {
            acc.push(*m);
        }
        acc
    });
    if methods.is_empty() {
        return Err(CliError::Input("--method must name at least one of ipw, gc".into()));
    }

    let all_covs = dedup_names(&[req.ps_covariates.clone(), req.q_covariates.clone()].concat());
    let spec = ColumnSpec {
        time: &req.time,
        event: &req.event,
        exposure: &req.exposure,
        covariates: &all_covs,
    };
    let loaded = read_dataset(&req.data, &spec, req.complete_case)?;
    if loaded.dropped > 0 {
        eprintln!("warning: dropped {} rows with missing values", loaded.dropped);
    }
    let data = loaded.data;
    let ps_subset = indices_of(&data, &req.ps_covariates);
    let q_subset = indices_of(&data, &req.q_covariates);

    let tau = match req.tau {
        Some(t) => t,
        None => select_tau(&data, DEFAULT_TAU_FRACTION).map_err(|e| CliError::from_core("tau selection", e))?,
    };
    let config = BootstrapConfig {
        replicates: req.bootstrap_b,
        seed: req.seed,
        level: req.level,
        ci: CiMethod::Percentile,
    };

    fs::create_dir_all(&req.out).map_err(|e| CliError::io(&req.out, e))?;
    let mut rows = Vec::new();
    for method in methods {
        let subset: &[usize] = match method {
            Method::Ipw => &ps_subset,
            Method::Gc => &q_subset,
        };
        let context = format!("{method} estimation");
        let fit = estimate(method, &data, subset, tau).map_err(|e| CliError::from_core(&context, e))?;
        let run_once = |d: &SurvivalDataset| {
            let t = match req.tau {
                Some(t) => t,
                None => select_tau(d, DEFAULT_TAU_FRACTION)?,
            };
            let e = estimate(method, d, subset, t)?;
            Ok(vec![e.log_ahr, e.rmst_diff])
        };
        let boot = bootstrap_many(&data, run_once, &config)
            .map_err(|e| CliError::from_core(&format!("{method} bootstrap"), e))?;
        for (estimand, b) in Estimand::ALL.into_iter().zip(&boot) {
            rows.push(ResultRow {
                method,
                estimand: estimand.label(),
                point: b.point,
                sd: b.sd,
                ci_lower: b.ci_lower,
                ci_upper: b.ci_upper,
                tau,
                bootstrap_b: req.bootstrap_b,
                seed: req.seed,
            });
        }

        let curves: Vec<CurveRow> = union_grid(&fit.survival_exposed, &fit.survival_unexposed)
            .into_iter()
            .map(|t| CurveRow {
                time: t,
                s1: fit.survival_exposed.eval(t),
                s0: fit.survival_unexposed.eval(t),
            })
            .collect();
        let name = format!("curves_{}.csv", method.to_string().to_ascii_lowercase());
        write_csv(&req.out.join(name), &curves)?;
    }
    write_csv(&req.out.join("results.csv"), &rows)?;

    println!("{:<4} {:<10} {:>12} {:>10} {:>12} {:>12}", "", "estimand", "point", "sd", "ci_lower", "ci_upper");
    for r in &rows {
        println!(
            "{:<4} {:<10} {:>12.5} {:>10.5} {:>12.5} {:>12.5}",
            r.method.to_string(),
            r.estimand,
            r.point,
            r.sd,
            r.ci_lower,
            r.ci_upper
        );
    }
    println!("tau = {tau}, B = {}, seed = {}, n = {}", req.bootstrap_b, req.seed, data.len());
    Ok(())
}
