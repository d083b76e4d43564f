//! Command-line surface. One subcommand per analysis; all output goes to
//! stdout unless `--out` redirects it, and every command is deterministic
//! given its flags.
//!
//! Default inputs resolve in order: explicit flag, then the
//! `ONCOSIM_DATA_DIR` directory, then files bundled into the binary.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::calibrate::{self, FitBudget};
use crate::counterfactual::{counterfactual_alive, progressive_survival, MixtureScenario};
use crate::dataio;
use crate::error::{Error, Result};
use crate::exact;
use crate::model::{build_transition_matrix, RateParams, Stage, State, TransitionMatrix};
use crate::montecarlo::{
    simulate_cohort, simulate_trajectories, summarize_trajectories, SimOptions,
};

pub const DATA_DIR_ENV: &str = "ONCOSIM_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "oncosim",
    version,
    about = "Multistate tumor progression model: exact statistics, cohort simulation, calibration"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Pretty,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print or export the one-year transition matrix.
    Matrix {
        /// Parameter file (JSON with lambda1..gamma); bundled defaults if omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Pretty)]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a cohort and report the summary as JSON.
    Simulate {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Cohort size.
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Survival horizon in years.
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        /// Write a per-trajectory CSV (id, diagnosis_stage, diagnosis_time, death_time).
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Include the full yearly state sequence in the dump.
        #[arg(long, requires = "dump")]
        dump_states: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact stage shares, survival at the horizon, and pooled survival.
    Exact {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        /// Write survival curves (columns t,s1,s2,s3) to this CSV file.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the model to an observed survival row.
    Fit {
        /// Target table CSV; bundled SEER table if omitted.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Site name, e.g. "Colon and Rectum".
        #[arg(long)]
        site: String,
        /// Hold treatment effectiveness fixed at this value.
        #[arg(long)]
        gamma: Option<f64>,
        /// Fit once per grid value and report the comparison table.
        #[arg(long, value_delimiter = ',', conflicts_with = "gamma")]
        gamma_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Fit on the three survival rates alone (required for sites
        /// without published stage shares).
        #[arg(long)]
        survival_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute outcomes across a grid of stage-1 detection rates.
    Sweep {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Comma-separated kappa1 values, e.g. 0.09,0.18,0.45.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        kappa1: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
        format: SweepFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Counterfactual survival: mixture arithmetic or model-based
    /// back-dated early detection.
    Counterfactual {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Treatment effectiveness in the hypothetical early-detection world.
        #[arg(long, conflicts_with = "mixture")]
        gamma_cf: Option<f64>,
        /// Years the hypothetical diagnosis is moved back.
        #[arg(long, default_value_t = 10)]
        back: usize,
        /// Years after the factual diagnosis date at which "alive" is asked.
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        /// Mixture mode: overall early-detection survival and the
        /// non-progressive fraction.
        #[arg(long, num_args = 2, value_names = ["SURVIVAL", "FRACTION"])]
        mixture: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Matrix {
            params,
            format,
            out,
        } => {
            let params = resolve_params(params.as_deref())?;
            let matrix = build_transition_matrix(&params)?;
            let payload = match format {
                TableFormat::Csv => {
                    let mut buffer = Vec::new();
                    dataio::write_matrix_csv(&matrix, &mut buffer)?;
                    String::from_utf8(buffer).expect("csv output is utf-8")
                }
                TableFormat::Pretty => pretty_matrix(&matrix),
            };
            emit(&payload, out.as_deref())
        }
        Command::Simulate {
            params,
            n,
            seed,
            horizon,
            dump,
            dump_states,
            out,
        } => {
            if n == 0 {
                return Err(Error::InvalidParam {
                    field: "n",
                    value: 0.0,
                    reason: "cohort size must be at least 1".to_string(),
                });
            }
            let params = resolve_params(params.as_deref())?;
            let matrix = build_transition_matrix(&params)?;
            let opts = SimOptions {
                horizon,
                ..SimOptions::default()
            };
            let summary = match dump {
                Some(dump_path) => {
                    let trajectories = simulate_trajectories(&matrix, n, seed, opts)?;
                    let file = File::create(&dump_path)?;
                    dataio::write_trajectories_csv(&trajectories, dump_states, file)?;
                    summarize_trajectories(&trajectories, seed, opts.horizon)
                }
                None => simulate_cohort(&matrix, n, seed, opts)?,
            };
            emit(&dataio::to_canonical_json(&summary)?, out.as_deref())
        }
        Command::Exact {
            params,
            horizon,
            curves,
            out,
        } => {
            let params = resolve_params(params.as_deref())?;
            let matrix = build_transition_matrix(&params)?;
            let report = ExactReport {
                horizon,
                stage_distribution: exact::stage_distribution(&matrix)?,
                survival_by_stage: exact::survival_at(&matrix, horizon),
                pooled_survival: exact::pooled_survival(&matrix, horizon)?,
            };
            if let Some(curves_path) = curves {
                let per_stage = [
                    exact::survival_curve(&matrix, Stage::Localized, horizon),
                    exact::survival_curve(&matrix, Stage::Regional, horizon),
                    exact::survival_curve(&matrix, Stage::Distant, horizon),
                ];
                let file = File::create(&curves_path)?;
                dataio::write_curves_csv(&per_stage, file)?;
            }
            emit(&dataio::to_canonical_json(&report)?, out.as_deref())
        }
        Command::Fit {
            target,
            site,
            gamma,
            gamma_grid,
            seed,
            restarts,
            iters,
            survival_only,
            out,
        } => {
            let table = resolve_targets(target.as_deref())?;
            let mut target = table
                .get(&site)
                .cloned()
                .ok_or_else(|| Error::SiteNotFound(site.clone()))?;
            if survival_only {
                target.stage_shares = None;
            } else if target.stage_shares.is_none() {
                return Err(Error::MissingShares(site));
            }
            let budget = FitBudget {
                restarts,
                max_iters: iters,
                tol: 1e-9,
            };
            let payload = match gamma_grid {
                Some(grid) => {
                    let rows = calibrate::identifiability_report(&target, &grid, seed, &budget)?;
                    dataio::to_canonical_json(&rows)?
                }
                None => {
                    let result = calibrate::fit(&target, gamma, seed, &budget)?;
                    dataio::to_canonical_json(&result)?
                }
            };
            emit(&payload, out.as_deref())
        }
        Command::Sweep {
            params,
            kappa1,
            format,
            out,
        } => {
            let params = resolve_params(params.as_deref())?;
            let rows = exact::screening_sweep(&params, &kappa1)?;
            let payload = match format {
                SweepFormat::Csv => {
                    let mut buffer = Vec::new();
                    dataio::write_sweep_csv(&rows, &mut buffer)?;
                    String::from_utf8(buffer).expect("csv output is utf-8")
                }
                SweepFormat::Json => dataio::to_canonical_json(&rows)?,
            };
            emit(&payload, out.as_deref())
        }
        Command::Counterfactual {
            params,
            gamma_cf,
            back,
            horizon,
            mixture,
            out,
        } => {
            let payload = match (mixture, gamma_cf) {
                (Some(values), _) => {
                    let scenario = MixtureScenario {
                        overall_survival: values[0],
                        nonprogressive_fraction: values[1],
                    };
                    let probability = progressive_survival(&scenario)?;
                    dataio::to_canonical_json(&CounterfactualReport {
                        probability,
                        assumptions: Assumptions::Mixture {
                            mode: "mixture",
                            overall_survival: scenario.overall_survival,
                            nonprogressive_fraction: scenario.nonprogressive_fraction,
                        },
                    })?
                }
                (None, Some(gamma_cf)) => {
                    let params = resolve_params(params.as_deref())?;
                    let probability = counterfactual_alive(&params, gamma_cf, back, horizon)?;
                    dataio::to_canonical_json(&CounterfactualReport {
                        probability,
                        assumptions: Assumptions::Model {
                            mode: "model",
                            gamma_cf,
                            back_years: back,
                            alive_horizon: horizon,
                            params,
                        },
                    })?
                }
                (None, None) => {
                    return Err(Error::InvalidParam {
                        field: "mode",
                        value: f64::NAN,
                        reason: "provide either --mixture S F or --gamma-cf G".to_string(),
                    })
                }
            };
            emit(&payload, out.as_deref())
        }
    }
}

#[derive(Serialize)]
struct ExactReport {
    horizon: usize,
    stage_distribution: exact::StageDistribution,
    survival_by_stage: [f64; 3],
    pooled_survival: f64,
}

#[derive(Serialize)]
struct CounterfactualReport {
    probability: f64,
    assumptions: Assumptions,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Assumptions {
    Mixture {
        mode: &'static str,
        overall_survival: f64,
        nonprogressive_fraction: f64,
    },
    Model {
        mode: &'static str,
        gamma_cf: f64,
        back_years: usize,
        alive_horizon: usize,
        params: RateParams,
    },
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn resolve_params(path: Option<&Path>) -> Result<RateParams> {
    match path {
        Some(p) => dataio::load_params(p),
        None => {
            if let Some(dir) = data_dir() {
                let candidate = dir.join("default_params.json");
                if candidate.exists() {
                    return dataio::load_params(&candidate);
                }
            }
            Ok(dataio::bundled_params())
        }
    }
}

fn resolve_targets(path: Option<&Path>) -> Result<dataio::SurvivalTable> {
    match path {
        Some(p) => dataio::load_targets(p),
        None => {
            if let Some(dir) = data_dir() {
                let candidate = dir.join("seer_2014_2020.csv");
                if candidate.exists() {
                    return dataio::load_targets(&candidate);
                }
            }
            Ok(dataio::bundled_targets())
        }
    }
}

fn pretty_matrix(matrix: &TransitionMatrix) -> String {
    let mut text = String::from("     ");
    for state in State::ALL {
        text.push_str(&format!("{:>8}", state.name()));
    }
    text.push('\n');
    for (state, row) in State::ALL.iter().zip(matrix.rows().iter()) {
        text.push_str(&format!("{:<5}", state.name()));
        for &p in row {
            text.push_str(&format!("{p:>8.4}"));
        }
        text.push('\n');
    }
    text
}

fn emit(payload: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, payload)?,
        None => print!("{payload}"),
    }
    Ok(())
}
