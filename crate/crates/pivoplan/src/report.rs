//! CSV outputs, aligned text tables and plot scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pivoplan_core::grasp::Modality;
use pivoplan_core::planner::AngleSpec;
use pivoplan_core::switch::SwitchSchedule;

use crate::exec::TraceRow;
use crate::experiments::{FeasibilityMatrix, MatrixCell};

pub fn angle_label(a: &AngleSpec) -> String {
    match a {
        AngleSpec::Fixed(v) => {
            let frac = v / std::f64::consts::PI;
            for (num, den) in [(-1i32, 2i32), (-1, 4), (1, 4), (1, 2)] {
                if (frac - num as f64 / den as f64).abs() < 1e-9 {
                    let sign = if *v < 0.0 { "-" } else { "" };
                    return format!("{sign}pi/{den}");
                }
            }
            if v.abs() < 1e-9 {
                "0.0".into()
            } else {
                format!("{v:.2}")
            }
        }
        AngleSpec::Free => "free".into(),
    }
}

fn cell_text(cell: &MatrixCell) -> String {
    if cell.succeeded() {
        let mut s = format!("{:.1}", cell.planning_time_s);
        if let Some(goal) = cell.chosen_goal_displayed() {
            let _ = write!(s, " ({goal:.2})");
        }
        s
    } else {
        "-".into()
    }
}

/// Paper-style matrix: planning times in seconds, "-" for failures, the
/// chosen angle of free cells in parentheses.
pub fn matrix_csv(matrix: &FeasibilityMatrix) -> String {
    let mut out = String::new();
    let _ = write!(out, "alpha_s\\alpha_g");
    for col in &matrix.cols {
        let _ = write!(out, ",{}", angle_label(col));
    }
    out.push('\n');
    for (i, row) in matrix.rows.iter().enumerate() {
        let _ = write!(out, "{}", angle_label(row));
        for cell in &matrix.cells[i] {
            let _ = write!(out, ",{}", cell_text(cell));
        }
        out.push('\n');
    }
    out
}

/// Deterministic companion file: outcomes and chosen angles only, no wall
/// clock, so identical runs produce identical bytes.
pub fn outcomes_csv(matrix: &FeasibilityMatrix) -> String {
    let mut out = String::from("alpha_s,alpha_g,outcome,chosen_start,chosen_goal,duration_s,gray\n");
    for (i, row) in matrix.rows.iter().enumerate() {
        for (j, col) in matrix.cols.iter().enumerate() {
            let cell = &matrix.cells[i][j];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                angle_label(row),
                angle_label(col),
                cell.outcome_label(),
                cell.chosen_start
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "-".into()),
                cell.chosen_goal
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "-".into()),
                format_args!("{:.2}", cell.sim_duration_s),
                if cell.gray { "gray" } else { "" },
            );
        }
    }
    out
}

/// Fixed-width text rendering of a matrix.
pub fn matrix_table(matrix: &FeasibilityMatrix, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let width = 14;
    let _ = write!(out, "{:>width$}", "a_s \\ a_g");
    for col in &matrix.cols {
        let _ = write!(out, "{:>width$}", angle_label(col));
    }
    out.push('\n');
    for (i, row) in matrix.rows.iter().enumerate() {
        let _ = write!(out, "{:>width$}", angle_label(row));
        for cell in &matrix.cells[i] {
            let mut text = cell_text(cell);
            if cell.gray {
                text = format!("[{text}]");
            }
            let _ = write!(out, "{text:>width$}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "([t] = equal fixed angles, feasible without pivoting)");
    out
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out =
        String::from("t,theta,phi,vj,fn,fn_sa,fn_gp,modality,ft_load,tau_load\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{},{:.4},{:.6}",
            r.t,
            r.theta,
            r.phi,
            r.vj,
            r.fn_commanded,
            r.fn_sa,
            r.fn_gp,
            match r.modality {
                Modality::SlippingAvoidance => "SA",
                Modality::GripperPivoting => "GP",
            },
            r.ft_load,
            r.tau_load,
        );
    }
    out
}

pub fn schedule_csv(schedule: &SwitchSchedule) -> String {
    let mut out = String::from("time,command\n");
    for e in &schedule.events {
        let _ = writeln!(
            out,
            "{:.3},{}",
            e.time,
            match e.command {
                Modality::SlippingAvoidance => "SA",
                Modality::GripperPivoting => "GP",
            }
        );
    }
    out
}

/// Standalone matplotlib script rendering one trace with gray pivoting
/// bands, in the convention of the force plots.
pub fn plot_script(case: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Render grasp-force and virtual-joint-speed plots for case {case}."""
import csv
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("trace_{case}.csv")))
t = [float(r["t"]) for r in rows]
fn = [float(r["fn"]) for r in rows]
fn_sa = [float(r["fn_sa"]) for r in rows]
fn_gp = [float(r["fn_gp"]) for r in rows]
vj = [float(r["vj"]) for r in rows]

events = list(csv.DictReader(open("schedule_{case}.csv")))
bands = []
start = None
for e in events:
    if e["command"] == "GP" and start is None:
        start = float(e["time"])
    elif e["command"] == "SA" and start is not None:
        bands.append((start, float(e["time"])))
        start = None
if start is not None:
    bands.append((start, t[-1]))

fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
for a, b in bands:
    ax1.axvspan(a, b, color="0.8")
    ax2.axvspan(a, b, color="0.8")
ax1.plot(t, fn_sa, "r", label="fn_SA")
ax1.plot(t, fn_gp, color="0.4", label="fn_GP")
ax1.plot(t, fn, "k", label="fn")
ax1.set_ylabel("grasp force [N]")
ax1.legend(loc="upper right")
ax2.plot(t, vj, "b")
ax2.set_ylabel("virtual joint speed [rad/s]")
ax2.set_xlabel("time [s]")
fig.tight_layout()
fig.savefig("plot_{case}.png", dpi=150)
print("wrote plot_{case}.png")
"#
    )
}

pub fn write(out_dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), content)
}
