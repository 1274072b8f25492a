//! `pivoplan` CLI: run the desk, shelf, stability and sensitivity
//! experiments against a scene file and write matrices, traces, schedules
//! and plot scripts into an output directory.
//!
//! Exit codes: 0 on completion, 2 on scene errors, 3 on internal solver
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pivoplan::experiments::{
    run_desk, run_sensitivity, run_shelf, run_stability, ExperimentSpec, DESK_ANGLES,
    SENSITIVITY_CASES,
};
use pivoplan::load_scene;
use pivoplan_core::planner::{AngleSpec, PlanError, PlannerConfig};

#[derive(Parser)]
#[command(
    name = "pivoplan",
    about = "Pivoting-aware manipulation planning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scene file (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory for CSVs, tables and plot scripts.
    #[arg(long)]
    out: PathBuf,
    /// Seed for all sampling and sensor noise.
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Plan with the virtual joint locked (no pivoting).
    #[arg(long, default_value_t = false)]
    no_pivot: bool,
    /// Virtual-joint speed separating the control modalities (rad/s).
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Enable the hysteresis band on the modality switch.
    #[arg(long, default_value_t = false)]
    hysteresis: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the desk pick-and-place grid over start/goal angles.
    Desk {
        #[command(flatten)]
        common: Common,
        /// Desk heights (top face, meters).
        #[arg(long, num_args = 1.., default_values_t = vec![0.2, 1.31])]
        heights: Vec<f64>,
        /// Fixed grid angles in radians; the free row/column is always added.
        #[arg(long, num_args = 0..)]
        angles: Vec<f64>,
    },
    /// Plan the shelf replenishment grids and execute the free-angle cases.
    Shelf {
        #[command(flatten)]
        common: Common,
        /// Layer heights (top face, meters).
        #[arg(long, num_args = 1.., default_values_t = vec![0.2, 0.6, 0.93, 1.31])]
        heights: Vec<f64>,
    },
    /// Twelve grasp-stability rollouts with object E.
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Friction-sensitivity study: wrong controller mu on objects B and D.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Per-object overrides as NAME=MU (may repeat).
        #[arg(long = "mu-override", value_parser = parse_override)]
        mu_overrides: Vec<(String, f64)>,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=MU, got {s}"))?;
    let mu: f64 = value.parse().map_err(|e| format!("bad mu in {s}: {e}"))?;
    Ok((name.to_string(), mu))
}

fn spec_from(common: &Common) -> ExperimentSpec {
    ExperimentSpec {
        out_dir: Some(common.out.clone()),
        seed: common.seed,
        threshold: common.threshold,
        hysteresis: common.hysteresis,
        no_pivot: common.no_pivot,
        config: PlannerConfig::default(),
    }
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Desk {
            common,
            heights,
            angles,
        } => {
            let scene = load_scene(&common.scene)?;
            let spec = spec_from(&common);
            let grid: Vec<AngleSpec> = if angles.is_empty() {
                DESK_ANGLES.to_vec()
            } else {
                let mut g: Vec<AngleSpec> = angles.iter().map(|&a| AngleSpec::Fixed(a)).collect();
                g.push(AngleSpec::Free);
                g
            };
            let matrices = run_desk(&scene, &heights, &grid, &spec)?;
            for m in &matrices {
                println!(
                    "{}",
                    pivoplan::report::matrix_table(
                        m,
                        &format!("desk at {:.2} m (planning seconds)", m.height)
                    )
                );
            }
        }
        Command::Shelf { common, heights } => {
            let scene = load_scene(&common.scene)?;
            let spec = spec_from(&common);
            let (matrices, executed) = run_shelf(&scene, &heights, &spec)?;
            for m in &matrices {
                println!(
                    "{}",
                    pivoplan::report::matrix_table(
                        m,
                        &format!(
                            "shelf at {:.2} m, object {} (planning seconds)",
                            m.height, m.object
                        )
                    )
                );
            }
            for case in &executed {
                println!(
                    "executed {}: final deviation {:.3} rad, {} pivoting intervals{}",
                    case.name,
                    case.result.summary.final_deviation,
                    case.result.summary.gp_intervals.len(),
                    if case.result.summary.slipped_out {
                        ", DROPPED"
                    } else {
                        ""
                    }
                );
            }
        }
        Command::Stability { common } => {
            let scene = load_scene(&common.scene)?;
            let spec = spec_from(&common);
            let report = run_stability(&scene, &spec);
            println!(
                "stability: mean final deviation slow {:.3} rad, fast {:.3} rad, max {:.3} rad, drops: {}",
                report.mean_final_slow,
                report.mean_final_fast,
                report.max_final,
                if report.any_drop { "YES" } else { "none" }
            );
        }
        Command::Sensitivity {
            common,
            mu_overrides,
        } => {
            let scene = load_scene(&common.scene)?;
            let spec = spec_from(&common);
            let cases: Vec<(String, f64, f64)> = if mu_overrides.is_empty() {
                SENSITIVITY_CASES
                    .iter()
                    .map(|&(n, l, m)| (n.to_string(), l, m))
                    .collect()
            } else {
                mu_overrides
                    .iter()
                    .map(|(name, mu)| (name.clone(), 1.31, *mu))
                    .collect()
            };
            let borrowed: Vec<(&str, f64, f64)> = cases
                .iter()
                .map(|(n, l, m)| (n.as_str(), *l, *m))
                .collect();
            let results = run_sensitivity(&scene, &borrowed, &spec)?;
            for c in &results {
                println!(
                    "{} mu_true {:.2} mu_controller {:.2}: {:?} (final deviation {:.3} rad)",
                    c.object, c.mu_true, c.mu_controller, c.outcome, c.final_deviation
                );
            }
        }
    }
    Ok(())
}

enum AppError {
    Scene(pivoplan::SceneFileError),
    Plan(PlanError),
}

impl From<pivoplan::SceneFileError> for AppError {
    fn from(e: pivoplan::SceneFileError) -> Self {
        AppError::Scene(e)
    }
}

impl From<PlanError> for AppError {
    fn from(e: PlanError) -> Self {
        AppError::Plan(e)
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Scene(e)) => {
            eprintln!("scene error: {e}");
            ExitCode::from(2)
        }
        Err(AppError::Plan(e)) => {
            eprintln!("planning error: {e}");
            ExitCode::from(3)
        }
    }
}
