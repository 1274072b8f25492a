//! The four experiments: desk and shelf feasibility grids, the grasp
//! stability runs, and the friction-sensitivity study.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::Isometry3;
use pivoplan_core::planner::{
    attach_object, plan, transport, AngleSpec, PlanOutcome, PlanRequest, PlannerConfig,
    Trajectory, TransportGoal,
};
use pivoplan_core::scene::SceneDescription;

use crate::exec::{execute_synthetic, execute_trajectory, ExecOptions, ExecResult, SyntheticRun};
use crate::report;
use crate::scene_file::{place_pose, set_desk_height, set_shelf_layers};

/// Shared experiment parameters.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub threshold: f64,
    pub hysteresis: bool,
    /// Plan every cell with the virtual joint locked.
    pub no_pivot: bool,
    pub config: PlannerConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            out_dir: None,
            seed: 17,
            threshold: pivoplan_core::switch::DEFAULT_THRESHOLD,
            hysteresis: false,
            no_pivot: false,
            config: PlannerConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatrixCell {
    pub outcome: PlanOutcome,
    pub planning_time_s: f64,
    pub sim_duration_s: f64,
    pub chosen_start: Option<f64>,
    pub chosen_goal: Option<f64>,
    /// Equal fixed start/goal angles: feasible without pivoting.
    pub gray: bool,
    pub col_free: bool,
}

impl MatrixCell {
    pub fn succeeded(&self) -> bool {
        self.outcome == PlanOutcome::Success
    }

    pub fn outcome_label(&self) -> &'static str {
        match self.outcome {
            PlanOutcome::Success => "success",
            PlanOutcome::InfeasibleStart => "infeasible_start",
            PlanOutcome::InfeasibleGoal => "infeasible_goal",
            PlanOutcome::CollisionStuck => "collision_stuck",
            PlanOutcome::Timeout => "timeout",
        }
    }

    /// Chosen goal angle shown in free columns, paper style.
    pub fn chosen_goal_displayed(&self) -> Option<f64> {
        if self.col_free && self.succeeded() {
            self.chosen_goal
        } else {
            None
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeasibilityMatrix {
    pub label: String,
    pub height: f64,
    pub object: String,
    pub rows: Vec<AngleSpec>,
    pub cols: Vec<AngleSpec>,
    pub cells: Vec<Vec<MatrixCell>>,
}

impl FeasibilityMatrix {
    pub fn cell(&self, row: usize, col: usize) -> &MatrixCell {
        &self.cells[row][col]
    }

    pub fn any_success(&self) -> bool {
        self.cells.iter().flatten().any(|c| c.succeeded())
    }
}

pub const DESK_ANGLES: [AngleSpec; 6] = [
    AngleSpec::Fixed(-std::f64::consts::FRAC_PI_2),
    AngleSpec::Fixed(-std::f64::consts::FRAC_PI_4),
    AngleSpec::Fixed(0.0),
    AngleSpec::Fixed(std::f64::consts::FRAC_PI_4),
    AngleSpec::Fixed(std::f64::consts::FRAC_PI_2),
    AngleSpec::Free,
];

pub const SHELF_ROWS: [AngleSpec; 3] = [
    AngleSpec::Fixed(-std::f64::consts::FRAC_PI_4),
    AngleSpec::Fixed(0.0),
    AngleSpec::Free,
];

pub const SHELF_COLS: [AngleSpec; 3] = [
    AngleSpec::Fixed(-std::f64::consts::FRAC_PI_2),
    AngleSpec::Fixed(-std::f64::consts::FRAC_PI_4),
    AngleSpec::Free,
];

/// Goal inset from the front face of a support surface.
const GOAL_INSET: f64 = 0.02;

/// Hover of the grasp frame above exact surface contact at the goal.
pub const PLACE_HOVER: f64 = 0.012;

fn front_face_x(scene: &SceneDescription, obstacle: &str) -> f64 {
    let o = scene.obstacle(obstacle).expect("support obstacle exists");
    o.pose.translation.x - o.half_extents.x
}

/// Run one grid of plans for `object` placed on `surface_z` at the goal.
fn run_matrix(
    scene: &SceneDescription,
    object: &str,
    goal_pose: Isometry3<f64>,
    rows: &[AngleSpec],
    cols: &[AngleSpec],
    spec: &ExperimentSpec,
    label: String,
    height: f64,
) -> Result<FeasibilityMatrix, pivoplan_core::planner::PlanError> {
    let mut cells = Vec::with_capacity(rows.len());
    for row in rows {
        let mut line = Vec::with_capacity(cols.len());
        for col in cols {
            let mut req = PlanRequest::new(object, goal_pose);
            req.start_grasp_angle = *row;
            req.goal_angle = *col;
            req.pivoting_enabled = !spec.no_pivot;
            let started = Instant::now();
            let result = plan(scene, &req, &spec.config)?;
            let planning_time_s = started.elapsed().as_secs_f64();
            let gray = matches!((row, col), (AngleSpec::Fixed(a), AngleSpec::Fixed(b)) if a == b);
            line.push(MatrixCell {
                outcome: result.outcome,
                planning_time_s,
                sim_duration_s: result
                    .trajectory
                    .as_ref()
                    .map(|t| t.duration())
                    .unwrap_or(0.0),
                chosen_start: result.chosen_start_angle,
                chosen_goal: result.chosen_goal_angle,
                gray,
                col_free: matches!(col, AngleSpec::Free),
            });
        }
        cells.push(line);
    }
    Ok(FeasibilityMatrix {
        label,
        height,
        object: object.into(),
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        cells,
    })
}

fn height_tag(h: f64) -> String {
    format!("{:03}", (h * 100.0).round() as i64)
}

fn write_matrix_outputs(spec: &ExperimentSpec, matrix: &FeasibilityMatrix, prefix: &str) {
    if let Some(dir) = &spec.out_dir {
        let tag = height_tag(matrix.height);
        let title = format!(
            "{} at {:.2} m, object {} (planning seconds)",
            prefix, matrix.height, matrix.object
        );
        let _ = report::write(dir, &format!("matrix_{tag}.csv"), &report::matrix_csv(matrix));
        let _ = report::write(
            dir,
            &format!("outcomes_{tag}.csv"),
            &report::outcomes_csv(matrix),
        );
        let _ = report::write(
            dir,
            &format!("table_{tag}.txt"),
            &report::matrix_table(matrix, &title),
        );
    }
}

/// Desk experiment: one feasibility matrix per desk height.
pub fn run_desk(
    scene: &SceneDescription,
    heights: &[f64],
    angles: &[AngleSpec],
    spec: &ExperimentSpec,
) -> Result<Vec<FeasibilityMatrix>, pivoplan_core::planner::PlanError> {
    let mut out = Vec::new();
    for &h in heights {
        let mut sc = scene.clone();
        set_desk_height(&mut sc, h);
        let object = sc.object("E").expect("desk scene has object E").clone();
        let goal = place_pose(
            &object,
            front_face_x(&sc, "desk") + GOAL_INSET,
            0.0,
            h,
            PLACE_HOVER,
        );
        let matrix = run_matrix(
            &sc,
            "E",
            goal,
            angles,
            angles,
            spec,
            format!("desk_{}", height_tag(h)),
            h,
        )?;
        write_matrix_outputs(spec, &matrix, "desk");
        out.push(matrix);
    }
    Ok(out)
}

/// One executed shelf case: trace, schedule and summary.
pub struct ExecCase {
    pub name: String,
    pub result: ExecResult,
    pub trajectory: Trajectory,
}

/// Shelf experiment: matrices per layer (objects A-D on layers bottom-up),
/// plus simulated execution of each layer's successful free-angle plan.
pub fn run_shelf(
    scene: &SceneDescription,
    heights: &[f64],
    spec: &ExperimentSpec,
) -> Result<(Vec<FeasibilityMatrix>, Vec<ExecCase>), pivoplan_core::planner::PlanError> {
    let mut sc = scene.clone();
    set_shelf_layers(&mut sc, heights);
    let object_names = ["A", "B", "C", "D"];
    let mut matrices = Vec::new();
    let mut executed = Vec::new();
    for (k, &h) in heights.iter().enumerate() {
        let name = object_names[k % object_names.len()];
        let object = sc.object(name).expect("shelf object exists").clone();
        let goal = place_pose(
            &object,
            front_face_x(&sc, "shelf_plinth") + GOAL_INSET,
            0.0,
            h,
            PLACE_HOVER,
        );
        let matrix = run_matrix(
            &sc,
            name,
            goal,
            &SHELF_ROWS,
            &SHELF_COLS,
            spec,
            format!("shelf_{}", height_tag(h)),
            h,
        )?;
        write_matrix_outputs(spec, &matrix, "shelf");
        matrices.push(matrix);

        if !spec.no_pivot {
            if let Some(case) = execute_shelf_case(&sc, name, h, spec)? {
                if let Some(dir) = &spec.out_dir {
                    let tag = format!("shelf_{}_{}", height_tag(h), name);
                    let _ = report::write(
                        dir,
                        &format!("trace_{tag}.csv"),
                        &report::trace_csv(&case.result.rows),
                    );
                    let _ = report::write(
                        dir,
                        &format!("schedule_{tag}.csv"),
                        &report::schedule_csv(&case.result.schedule),
                    );
                    let _ = report::write(dir, &format!("plot_{tag}.py"), &report::plot_script(&tag));
                }
                executed.push(case);
            }
        }
    }
    Ok((matrices, executed))
}

/// Plan and execute one shelf placement as a two-goal task: carry the object
/// to a tilted pre-pose in front of the layer, then insert it. Sequencing
/// the motion goals puts the pivoting into two separate phases: once after
/// the lift, once inside the shelf.
pub fn execute_shelf_case(
    scene: &SceneDescription,
    object_name: &str,
    height: f64,
    spec: &ExperimentSpec,
) -> Result<Option<ExecCase>, pivoplan_core::planner::PlanError> {
    let object = scene.object(object_name).expect("object exists").clone();
    let front = front_face_x(scene, "shelf_plinth");
    let pre_pose = place_pose(&object, front - 0.18, 0.0, height, PLACE_HOVER);
    let goal_pose = place_pose(&object, front + GOAL_INSET, 0.0, height, PLACE_HOVER);

    let mut req = PlanRequest::new(object_name, pre_pose);
    req.start_grasp_angle = AngleSpec::Free;
    // Higher layers need the carry tilt to start steeper so the wrist stays
    // inside the vertical workspace.
    req.goal_angle = AngleSpec::Fixed(-(0.6 + 0.65 * height));
    let first = plan(scene, &req, &spec.config)?;
    if first.outcome != PlanOutcome::Success {
        return Ok(None);
    }
    let seg1 = first.trajectory.unwrap();

    let model = attach_object(scene, &object)?;
    let q_mid = seg1.samples.last().unwrap().clone();
    let second = transport(
        scene,
        &model,
        q_mid,
        &TransportGoal {
            pose: goal_pose,
            goal_angle: AngleSpec::Free.fixed(),
            pivoting_enabled: true,
        },
        req.timestep,
        req.max_duration,
        &spec.config,
    )?;
    if second.outcome != PlanOutcome::Success {
        return Ok(None);
    }
    let seg2 = second.trajectory.unwrap();

    let combined = concatenate(&seg1, &seg2);
    let options = ExecOptions {
        seed: spec.seed,
        threshold: spec.threshold,
        hysteresis: spec.hysteresis,
        controller_mu: None,
    };
    let result = execute_trajectory(scene, &object, &combined, &options);
    Ok(Some(ExecCase {
        name: format!("{}_{}", height_tag(height), object_name),
        result,
        trajectory: combined,
    }))
}

/// Join two trajectories that share their junction sample.
pub fn concatenate(a: &Trajectory, b: &Trajectory) -> Trajectory {
    let dt = a.timestep().max(b.timestep());
    let offset = a.times.last().copied().unwrap_or(0.0) + dt;
    let mut times = a.times.clone();
    let mut samples = a.samples.clone();
    for (i, q) in b.samples.iter().enumerate().skip(1) {
        times.push(offset + (i as f64 - 1.0) * dt);
        samples.push(q.clone());
    }
    Trajectory {
        times,
        samples,
        pivot_index: a.pivot_index,
        metadata: a.metadata,
    }
}

/// Stability experiment report.
#[derive(Clone, Debug)]
pub struct StabilityRun {
    pub index: usize,
    pub motion: &'static str,
    pub fast: bool,
    pub final_deviation: f64,
    pub max_deviation: f64,
    pub slipped_out: bool,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub runs: Vec<StabilityRun>,
    pub mean_final_slow: f64,
    pub mean_final_fast: f64,
    pub max_final: f64,
    pub any_drop: bool,
}

/// Twelve seeded rollouts of simple tool-frame motions with object E, six
/// slow and six fast.
pub fn run_stability(scene: &SceneDescription, spec: &ExperimentSpec) -> StabilityReport {
    let object = scene.object("E").expect("stability uses object E").clone();
    let dt = 0.05;
    let motions: [&'static str; 6] = [
        "pivot_rotation_pos",
        "pivot_rotation_neg",
        "closing_axis_tilt",
        "translation_x",
        "translation_z",
        "combined",
    ];
    let mut runs = Vec::new();
    for index in 0..12 {
        let fast = index >= 6;
        let motion = motions[index % 6];
        let (tilt_rate, accel) = if fast { (0.4, 2.0) } else { (0.2, 0.5) };
        let run = synthesize_motion(motion, tilt_rate, accel, dt);
        let options = ExecOptions {
            seed: spec.seed.wrapping_add(index as u64),
            threshold: spec.threshold,
            hysteresis: spec.hysteresis,
            controller_mu: None,
        };
        let result = execute_synthetic(&object, &run, &options);
        runs.push(StabilityRun {
            index,
            motion,
            fast,
            final_deviation: result.summary.final_deviation,
            max_deviation: result.summary.max_deviation,
            slipped_out: result.summary.slipped_out,
        });
    }
    let mean = |fast: bool| {
        let xs: Vec<f64> = runs
            .iter()
            .filter(|r| r.fast == fast)
            .map(|r| r.final_deviation)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let report = StabilityReport {
        mean_final_slow: mean(false),
        mean_final_fast: mean(true),
        max_final: runs
            .iter()
            .map(|r| r.final_deviation)
            .fold(0.0f64, f64::max),
        any_drop: runs.iter().any(|r| r.slipped_out),
        runs,
    };
    if let Some(dir) = &spec.out_dir {
        let mut csv = String::from("run,motion,speed,final_deviation,max_deviation,slipped\n");
        for r in &report.runs {
            csv.push_str(&format!(
                "{},{},{},{:.4},{:.4},{}\n",
                r.index,
                r.motion,
                if r.fast { "fast" } else { "slow" },
                r.final_deviation,
                r.max_deviation,
                r.slipped_out
            ));
        }
        csv.push_str(&format!(
            "mean_slow,,,{:.4},,\nmean_fast,,,{:.4},,\n",
            report.mean_final_slow, report.mean_final_fast
        ));
        let _ = report::write(dir, "stability.csv", &csv);
    }
    report
}

/// Piecewise tool-frame motion profiles sampled at the planner rate.
fn synthesize_motion(kind: &str, tilt_rate: f64, accel: f64, dt: f64) -> SyntheticRun {
    let total = 14.0;
    let n = (total / dt) as usize + 1;
    let mut tilt = vec![0.0; n];
    let mut in_plane = vec![1.0; n];
    let mut accel_trace = vec![0.0; n];
    let t_of = |i: usize| i as f64 * dt;
    match kind {
        "pivot_rotation_pos" | "pivot_rotation_neg" => {
            let sign = if kind.ends_with("neg") { -1.0 } else { 1.0 };
            let amplitude = std::f64::consts::FRAC_PI_2;
            let ramp = amplitude / tilt_rate;
            for i in 0..n {
                let t = t_of(i);
                // Up, hold, and back down.
                let a = if t < 1.0 {
                    0.0
                } else if t < 1.0 + ramp {
                    (t - 1.0) * tilt_rate
                } else if t < 3.0 + ramp {
                    amplitude
                } else if t < 3.0 + 2.0 * ramp {
                    amplitude - (t - 3.0 - ramp) * tilt_rate
                } else {
                    0.0
                };
                tilt[i] = sign * a.clamp(0.0, amplitude);
            }
        }
        "closing_axis_tilt" => {
            // Rotation about the approach axis tips the closing axis out of
            // horizontal; the in-plane weight fraction follows its cosine.
            let amplitude: f64 = 0.5;
            let ramp = amplitude / tilt_rate;
            for i in 0..n {
                let t = t_of(i);
                let a = if t < 1.0 {
                    0.0
                } else if t < 1.0 + ramp {
                    (t - 1.0) * tilt_rate
                } else if t < 4.0 + ramp {
                    amplitude
                } else if t < 4.0 + 2.0 * ramp {
                    amplitude - (t - 4.0 - ramp) * tilt_rate
                } else {
                    0.0
                };
                in_plane[i] = a.clamp(0.0, amplitude).cos();
            }
        }
        "translation_x" | "translation_z" => {
            for i in 0..n {
                let t = t_of(i);
                // Two accelerate/brake bumps.
                let bump = |t0: f64, t: f64| -> f64 {
                    if t >= t0 && t < t0 + 0.8 {
                        accel
                    } else if t >= t0 + 1.6 && t < t0 + 2.4 {
                        accel
                    } else {
                        0.0
                    }
                };
                accel_trace[i] = bump(2.0, t) + bump(7.0, t);
            }
        }
        _ => {
            // Combined: a pivot rotation with acceleration bumps on top.
            let amplitude = std::f64::consts::FRAC_PI_4;
            let ramp = amplitude / tilt_rate;
            for i in 0..n {
                let t = t_of(i);
                let a = if t < 2.0 {
                    0.0
                } else if t < 2.0 + ramp {
                    (t - 2.0) * tilt_rate
                } else if t < 8.0 {
                    amplitude
                } else if t < 8.0 + ramp {
                    amplitude - (t - 8.0) * tilt_rate
                } else {
                    0.0
                };
                tilt[i] = a.clamp(0.0, amplitude);
                accel_trace[i] = if (4.0..4.8).contains(&t) { accel } else { 0.0 };
            }
        }
    }
    SyntheticRun {
        tilt,
        in_plane,
        accel: accel_trace,
        timestep: dt,
    }
}

/// Sensitivity study outcome classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensitivityOutcome {
    Ok,
    /// The object did not rotate with the pivot and ended far from vertical.
    PivotFailure,
    /// The object slipped out of the fingers.
    Drop,
}

#[derive(Clone, Debug)]
pub struct SensitivityCase {
    pub object: String,
    pub mu_true: f64,
    pub mu_controller: f64,
    pub outcome: SensitivityOutcome,
    pub final_deviation: f64,
}

/// Threshold on the final verticality error separating a worked pivot from
/// a failed one.
pub const PIVOT_FAILURE_DEVIATION: f64 = 0.5;

/// Replay cached shelf executions with controller-side friction overrides.
pub fn run_sensitivity(
    scene: &SceneDescription,
    cases: &[(&str, f64, f64)],
    spec: &ExperimentSpec,
) -> Result<Vec<SensitivityCase>, pivoplan_core::planner::PlanError> {
    let mut sc = scene.clone();
    set_shelf_layers(&mut sc, &[0.2, 0.6, 0.93, 1.31]);
    let mut plans: std::collections::BTreeMap<String, (Trajectory, f64)> =
        std::collections::BTreeMap::new();
    let mut out = Vec::new();
    for &(name, layer, mu_ctrl) in cases {
        let object = sc.object(name).expect("sensitivity object exists").clone();
        if !plans.contains_key(name) {
            let front = front_face_x(&sc, "shelf_plinth");
            let goal = place_pose(&object, front + GOAL_INSET, 0.0, layer, PLACE_HOVER);
            let mut req = PlanRequest::new(name, goal);
            req.start_grasp_angle = AngleSpec::Free;
            req.goal_angle = AngleSpec::Free;
            let result = plan(&sc, &req, &spec.config)?;
            assert_eq!(
                result.outcome,
                PlanOutcome::Success,
                "sensitivity base plan for {name} failed"
            );
            plans.insert(name.into(), (result.trajectory.unwrap(), layer));
        }
        let (traj, _) = plans.get(name).unwrap();
        let options = ExecOptions {
            seed: spec.seed,
            threshold: spec.threshold,
            hysteresis: spec.hysteresis,
            controller_mu: Some(mu_ctrl),
        };
        let result = execute_trajectory(&sc, &object, traj, &options);
        let outcome = if result.summary.slipped_out {
            SensitivityOutcome::Drop
        } else if result.summary.final_deviation > PIVOT_FAILURE_DEVIATION {
            SensitivityOutcome::PivotFailure
        } else {
            SensitivityOutcome::Ok
        };
        if let Some(dir) = &spec.out_dir {
            let tag = format!("sens_{}_mu{:03}", name, (mu_ctrl * 100.0).round() as i64);
            let _ = report::write(dir, &format!("trace_{tag}.csv"), &report::trace_csv(&result.rows));
            let _ = report::write(
                dir,
                &format!("schedule_{tag}.csv"),
                &report::schedule_csv(&result.schedule),
            );
            let _ = report::write(dir, &format!("plot_{tag}.py"), &report::plot_script(&tag));
        }
        out.push(SensitivityCase {
            object: name.into(),
            mu_true: object.mu,
            mu_controller: mu_ctrl,
            outcome,
            final_deviation: result.summary.final_deviation,
        });
    }
    if let Some(dir) = &spec.out_dir {
        let mut csv = String::from("object,mu_true,mu_controller,outcome,final_deviation\n");
        for c in &out {
            csv.push_str(&format!(
                "{},{:.2},{:.2},{},{:.4}\n",
                c.object,
                c.mu_true,
                c.mu_controller,
                match c.outcome {
                    SensitivityOutcome::Ok => "ok",
                    SensitivityOutcome::PivotFailure => "pivot_failure",
                    SensitivityOutcome::Drop => "drop",
                },
                c.final_deviation
            ));
        }
        let _ = report::write(dir, "sensitivity.csv", &csv);
    }
    Ok(out)
}

/// Default sensitivity grid: object B against underestimated friction,
/// object D against an overestimate.
pub const SENSITIVITY_CASES: [(&str, f64, f64); 6] = [
    ("B", 1.31, 0.25),
    ("B", 1.31, 0.30),
    ("B", 1.31, 0.50),
    ("B", 1.31, 0.90),
    ("D", 1.31, 0.85),
    ("D", 1.31, 0.72),
];
