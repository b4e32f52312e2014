//! `causalsurv`: causal survival contrasts from observational data.
//!
//! Exit codes: 0 success, 1 input error, 2 estimation failure.

mod analyze;
mod error;
mod input;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use causal_surv::estimators::Method;
use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "causalsurv", version, about = "IPW and g-computation for causal survival contrasts")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate log-AHR and RMST difference on a CSV dataset.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        time: String,
        #[arg(long)]
        event: String,
        #[arg(long)]
        exposure: String,
        /// Propensity-score covariates, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "")]
        ps_covs: Vec<String>,
        /// Outcome-model covariates, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "")]
        q_covs: Vec<String>,
        /// Restriction time; chosen from the data when omitted.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "B", default_value_t = 1000)]
        bootstrap_b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_delimiter = ',', default_value = "ipw,gc")]
        method: Vec<Method>,
        /// Drop rows with missing values instead of failing.
        #[arg(long)]
        complete_case: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation scenario described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a truth.json instead of recomputing it.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Sample size for computing the truth.
        #[arg(long, default_value_t = simulate::DEFAULT_TRUTH_N)]
        truth_n: usize,
    },
    /// Print the theoretical log-AHR and RMST difference as JSON.
    Truth {
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long)]
        censor_max: f64,
        #[arg(long, default_value_t = simulate::DEFAULT_TRUTH_N)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of large datasets to average over.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
}

fn strip_empty(v: Vec<String>) -> Vec<String> {
    v.into_iter().filter(|s| !s.is_empty()).collect()
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Analyze {
            data,
            time,
            event,
            exposure,
            ps_covs,
            q_covs,
            tau,
            bootstrap_b,
            seed,
            level,
            method,
            complete_case,
            out,
        } => analyze::run(&analyze::AnalyzeRequest {
            data,
            time,
            event,
            exposure,
            ps_covariates: strip_empty(ps_covs),
            q_covariates: strip_empty(q_covs),
            tau,
            bootstrap_b,
            seed,
            level,
            methods: method,
            complete_case,
            out,
        }),
        Command::Simulate { config, out, truth, truth_n } => simulate::run_simulate(&simulate::SimulateRequest {
            config,
            out,
            truth,
            truth_n,
        }),
        Command::Truth { gamma, censor_max, n, seed, repeats } => simulate::run_truth(&simulate::TruthRequest {
            gamma,
            censor_max,
            n,
            seed,
            repeats,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
