//! `simulate` and `truth`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use causal_surv::estimators::Method;
use causal_surv::simulation::{run_scenario, theoretical_truth, Estimand, MetricsTable, ScenarioConfig, Truth};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_TRUTH_N: usize = 1_000_000;

pub struct SimulateRequest {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Previously computed truth; computed from the config otherwise.
    pub truth: Option<PathBuf>,
    pub truth_n: usize,
}

pub struct TruthRequest {
    pub gamma: f64,
    pub censor_max: f64,
    pub n: usize,
    pub seed: u64,
    pub repeats: usize,
}

#[derive(Serialize)]
struct TruthReport {
    gamma: f64,
    censor_max: f64,
    n: usize,
    seed: u64,
    repeats: usize,
    log_ahr: f64,
    rmst_diff: f64,
    tau: f64,
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|fields| CliError::Input(format!("{}: invalid config: {}", path.display(), fields.join("; "))))?;
    Ok(config)
}

fn compute_truth(req: &TruthRequest) -> CliResult<Truth> {
    theoretical_truth(req.gamma, req.censor_max, req.n, req.seed, req.repeats)
        .map_err(|e| CliError::from_core("truth", e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn run_truth(req: &TruthRequest) -> CliResult<()> {
    let t = compute_truth(req)?;
    print!(
        "{}",
        to_json(&TruthReport {
            gamma: req.gamma,
            censor_max: req.censor_max,
            n: req.n,
            seed: req.seed,
            repeats: req.repeats,
            log_ahr: t.log_ahr,
            rmst_diff: t.rmst_diff,
            tau: t.tau,
        })
    );
    Ok(())
}

pub fn run_simulate(req: &SimulateRequest) -> CliResult<()> {
    let config = load_config(&req.config)?;
    let truth = match &req.truth {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<Truth>(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => compute_truth(&TruthRequest {
            gamma: config.gamma,
            censor_max: config.censor_max,
            n: req.truth_n,
            seed: config.seed,
            repeats: 1,
        })?,
    };
    let table = run_scenario(&config, &truth).map_err(|e| CliError::from_core("simulation", e))?;

    fs::create_dir_all(&req.out).map_err(|e| CliError::io(&req.out, e))?;
    let truth_path = req.out.join("truth.json");
    fs::write(&truth_path, to_json(&truth)).map_err(|e| CliError::io(&truth_path, e))?;
    let metrics_path = req.out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    for cell in &table.cells {
        w.serialize(cell).map_err(|e| CliError::io(&metrics_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&metrics_path, e))?;
    let summary = summary_text(&table);
    let summary_path = req.out.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| CliError::io(&summary_path, e))?;
    print!("{summary}");
    Ok(())
}

fn cell_value(v: f64, se: f64, digits: usize) -> String {
    format!("{v:.digits$} ({se:.digits$})")
}

/// One panel per estimand, one row per method and covariate set, Monte-Carlo
/// standard errors in parentheses.
pub fn summary_text(table: &MetricsTable) -> String {
    let mut s = String::new();
    let hypothesis = if table.is_null() { "null" } else { "alternative" };
    let rejection = if table.is_null() { "type I %" } else { "power %" };
    let _ = writeln!(
        s,
        "n = {}, gamma = {:.4} ({hypothesis}), censor_max = {}, R = {}, B = {}, seed = {}",
        table.n, table.gamma, table.censor_max, table.replicates, table.bootstrap_b, table.seed
    );
    let _ = writeln!(
        s,
        "theoretical log-AHR = {:.3}, RMST difference = {:.3} at tau = {:.1}",
        table.truth.log_ahr, table.truth.rmst_diff, table.truth.tau
    );
    for estimand in Estimand::ALL {
        let title = match estimand {
            Estimand::LogAhr => "log average hazard ratio",
            Estimand::RmstDiff => "difference in restricted mean survival time",
        };
        let _ = writeln!(s, "\n{title} (theoretical value {:.3})", table.truth.value(estimand));
        let _ = writeln!(
            s,
            "{:<4} {:<13} {:>15} {:>17} {:>17} {:>17} {:>15} {:>15}",
            "", "covariates", "no conv. %", "MAB", "MSE", "VEB %", "coverage %", rejection
        );
        for cell in table.cells.iter().filter(|c| c.estimand == estimand) {
            let method = match cell.method {
                Method::Ipw => "IPW",
                Method::Gc => "GC",
            };
            let _ = writeln!(
                s,
                "{:<4} {:<13} {:>15} {:>17} {:>17} {:>17} {:>15} {:>15}",
                method,
                cell.covariate_set.label(),
                cell_value(cell.convergence_failure_pct, cell.convergence_failure_se, 1),
                cell_value(cell.mab, cell.mab_se, 3),
                cell_value(cell.mse, cell.mse_se, 3),
                cell_value(cell.veb_pct, cell.veb_se, 1),
                cell_value(cell.coverage_pct, cell.coverage_se, 1),
                cell_value(cell.rejection_pct, cell.rejection_se, 1),
            );
        }
    }
    s
}
