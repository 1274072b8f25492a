//! Constraint-based velocity-level whole-body planner.
//!
//! Motions are specified as a stack of scalar constraints on joint
//! velocities; each timestep solves the strictly convex program of [`crate::qp`]
//! and integrates the resulting joint rates until the goal tolerances are
//! met or progress stalls. Pivoting is planned by attaching the virtual
//! joint and keeping the grasped object vertical through a high-priority
//! constraint, so the gripper tilt is free to change while the object hangs
//! plumb.
//!
//! A plan runs in two phases: a reach phase that drives the empty gripper
//! from the home configuration to a collision-free grasp pose (sampling
//! candidate grasp angles when the start angle is free), and a transport
//! phase that moves the grasped object to its goal pose.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DVector, Isometry3, Point3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::kinematics::{Configuration, KinematicModel, KinematicsError};
use crate::qp::{self, ConstraintRow, QpError, RowKind};
use crate::scene::{min_distance_robot_scene, ObjectModel, PairBodies, SceneDescription, SceneError};

/// A start or goal grasp angle: fixed by the caller or left to the planner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngleSpec {
    Fixed(f64),
    Free,
}

impl AngleSpec {
    pub fn fixed(&self) -> Option<f64> {
        match self {
            AngleSpec::Fixed(a) => Some(*a),
            AngleSpec::Free => None,
        }
    }
}

/// One planning request. The grasp angle is measured about the gripper
/// closing axis: 0 is a vertical gripper pointing straight down, negative
/// angles tilt the fingers forward (away from the robot) and positive
/// angles tilt them back.
#[derive(Clone, Debug)]
pub struct PlanRequest {
    pub object: String,
    pub start_grasp_angle: AngleSpec,
    /// World pose of the object's grasp frame at the goal.
    pub goal_pose: Isometry3<f64>,
    pub goal_angle: AngleSpec,
    pub pivoting_enabled: bool,
    pub timestep: f64,
    pub max_duration: f64,
}

impl PlanRequest {
    pub fn new(object: impl Into<String>, goal_pose: Isometry3<f64>) -> Self {
        Self {
            object: object.into(),
            start_grasp_angle: AngleSpec::Free,
            goal_pose,
            goal_angle: AngleSpec::Free,
            pivoting_enabled: true,
            timestep: 0.05,
            max_duration: 60.0,
        }
    }

    fn validate(&self) -> Result<(), PlanError> {
        if !(self.timestep > 0.0) {
            return Err(PlanError::BadRequest("timestep must be positive"));
        }
        if !(self.max_duration > 0.0) {
            return Err(PlanError::BadRequest("max duration must be positive"));
        }
        for angle in [self.start_grasp_angle, self.goal_angle] {
            if let Some(a) = angle.fixed() {
                if !(a > -core::f64::consts::PI && a <= core::f64::consts::PI) {
                    return Err(PlanError::BadRequest("fixed angles must lie in (-pi, pi]"));
                }
            }
        }
        Ok(())
    }
}

/// Gains, weights and tolerances of the velocity controller.
#[derive(Clone, Copy, Debug)]
pub struct PlannerConfig {
    /// Proportional gain of the goal-pose rows.
    pub goal_gain: f64,
    pub goal_weight: f64,
    /// Verticality outranks every goal row; priority is realized as weight
    /// separation, one tier is all the task needs.
    pub verticality_weight: f64,
    pub verticality_gain: f64,
    pub angle_weight: f64,
    /// Gain of the collision rows d_dot >= -k (d - d_safe).
    pub collision_gain: f64,
    pub safety_distance: f64,
    pub distance_cutoff: f64,
    pub regularization: f64,
    /// Declare a stall when the error improves less than
    /// `stall_tolerance` over `stall_window` seconds.
    pub stall_window: f64,
    pub stall_tolerance: f64,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub angle_tolerance: f64,
    /// Grid size for free start-angle sampling over [-pi/2, pi/2].
    pub start_candidates: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            goal_gain: 1.0,
            goal_weight: 10.0,
            verticality_weight: 1000.0,
            verticality_gain: 2.0,
            angle_weight: 10.0,
            collision_gain: 2.0,
            safety_distance: 0.01,
            distance_cutoff: crate::scene::DISTANCE_CUTOFF,
            regularization: qp::DEFAULT_REGULARIZATION,
            stall_window: 2.0,
            stall_tolerance: 1e-4,
            position_tolerance: 5e-3,
            orientation_tolerance: 0.01,
            angle_tolerance: 0.01,
            start_candidates: 17,
        }
    }
}

/// Timed whole-body joint samples, including the virtual joint when present.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<Configuration>,
    pub pivot_index: Option<usize>,
    pub metadata: TrajectoryMetadata,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrajectoryMetadata {
    /// Wall-clock planning time, filled in by the caller that timed the run.
    pub planning_time_s: f64,
    pub converged: bool,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn timestep(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Column of virtual-joint positions; empty when no pivot is attached.
    pub fn pivot_positions(&self) -> Vec<f64> {
        match self.pivot_index {
            Some(p) => self.samples.iter().map(|q| q.values[p]).collect(),
            None => Vec::new(),
        }
    }

    /// Largest per-joint finite-difference velocity over the trajectory.
    pub fn max_joint_speed(&self, joint: usize) -> f64 {
        let mut v: f64 = 0.0;
        for w in self.samples.windows(2) {
            let dt = self.timestep();
            if dt > 0.0 {
                v = v.max(((w[1].values[joint] - w[0].values[joint]) / dt).abs());
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanOutcome {
    Success,
    /// No collision-free, reachable grasp at the requested start angle(s).
    InfeasibleStart,
    /// The goal pose itself is in collision (object or gripper body).
    InfeasibleGoal,
    /// Progress stalled with collision constraints active, or the hard
    /// constraint set became inconsistent.
    CollisionStuck,
    /// Ran out of time, or stalled in open space short of the goal.
    Timeout,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub trajectory: Option<Trajectory>,
    pub chosen_start_angle: Option<f64>,
    pub chosen_goal_angle: Option<f64>,
}

impl PlanResult {
    fn failure(outcome: PlanOutcome) -> Self {
        Self {
            outcome,
            trajectory: None,
            chosen_start_angle: None,
            chosen_goal_angle: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.outcome == PlanOutcome::Success
    }
}

#[derive(Clone, Debug, Error)]
pub enum PlanError {
    #[error("invalid request: {0}")]
    BadRequest(&'static str),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("scene error: {0}")]
    Scene(#[from] SceneError),
    #[error("kinematics error: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("solver failure: {0}")]
    Solver(QpError),
}

/// Tool pose holding the object (grasp frame `object_pose`) at grasp angle
/// `alpha`: same origin, gripper rotated by `alpha` about the closing axis.
pub fn tool_pose_for_grasp(object_pose: &Isometry3<f64>, alpha: f64) -> Isometry3<f64> {
    let tilt = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(Vector3::y()), alpha);
    Isometry3::from_parts(object_pose.translation, object_pose.rotation * tilt)
}

/// Angle between the grasp-point-to-CoG vector and gravity, in [0, pi].
///
/// Zero means the object hangs plumb below the grasp point. Requires an
/// attached pivot joint.
pub fn verticality_error(
    model: &KinematicModel,
    q: &Configuration,
    gravity: &Vector3<f64>,
) -> Result<f64, PlanError> {
    let pivot = model
        .pivot_joint_index()
        .ok_or(PlanError::Kinematics(KinematicsError::UnknownLink {
            link: String::from("virtual_pivot"),
        }))?;
    let frames = model.frames(q)?;
    let object_frame = frames[pivot];
    let parent = if pivot == 0 {
        Isometry3::identity()
    } else {
        frames[pivot - 1]
    };
    let grasp_point = (parent * model.joints()[pivot].origin).translation.vector;
    let cog = object_frame.transform_point(&Point3::from(model.object_cog_offset()));
    let c = cog.coords - grasp_point;
    let cn = c.norm();
    if cn <= 1e-12 {
        return Err(PlanError::Kinematics(KinematicsError::ZeroCogOffset));
    }
    let g = gravity.normalize();
    let cu = c / cn;
    // atan2 form of the angle between unit vectors; stable near 0 and pi.
    Ok(libm::atan2(cu.cross(&g).norm(), cu.dot(&g)))
}

/// What the current phase is driving toward.
#[derive(Clone, Debug)]
pub enum PhaseGoal {
    /// Drive the empty gripper's grasp frame to a pose.
    Tool { pose: Isometry3<f64> },
    /// Drive the grasped object's frame to a pose, optionally pinning the
    /// final grasp angle, with or without pivoting freedom.
    Object {
        pose: Isometry3<f64>,
        goal_angle: Option<f64>,
        pivoting_enabled: bool,
    },
}

impl PhaseGoal {
    fn target_pose(&self) -> &Isometry3<f64> {
        match self {
            PhaseGoal::Tool { pose } => pose,
            PhaseGoal::Object { pose, .. } => pose,
        }
    }
}

/// Rotation-vector error taking `current` onto `goal`, in world coordinates.
fn orientation_error(goal: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    // Long kinematic chains accumulate quaternion norm drift; renormalize
    // before extracting an axis-angle or acos can run out of domain.
    let delta = UnitQuaternion::new_normalize((goal * current.inverse()).into_inner());
    let m: Rotation3<f64> = delta.to_rotation_matrix();
    m.scaled_axis()
}

struct PoseError {
    position: Vector3<f64>,
    rotation: Vector3<f64>,
}

/// Frame the goal rows act on: the object link with a pivot, the grasp
/// frame of the last arm link otherwise.
fn controlled_frame(
    scene: &SceneDescription,
    model: &KinematicModel,
    q: &Configuration,
) -> Result<(usize, Isometry3<f64>), PlanError> {
    let frames = model.frames(q)?;
    match model.pivot_joint_index() {
        Some(p) => Ok((p, frames[p])),
        None => {
            let link = model.tool_link_index();
            Ok((link, frames[link] * scene.tool_offset))
        }
    }
}

fn pose_error(goal: &Isometry3<f64>, current: &Isometry3<f64>) -> PoseError {
    PoseError {
        position: current.translation.vector - goal.translation.vector,
        rotation: orientation_error(&goal.rotation, &current.rotation),
    }
}

/// Assemble the per-step constraint stack: goal-pose rows, the verticality
/// row, optional fixed-angle and pivot-lock rows, hard joint limit rows and
/// one hard row per active proximity pair.
pub fn build_constraints(
    scene: &SceneDescription,
    model: &KinematicModel,
    q: &Configuration,
    goal: &PhaseGoal,
    config: &PlannerConfig,
    timestep: f64,
) -> Result<Vec<ConstraintRow>, PlanError> {
    let dof = model.dof();
    let mut rows = Vec::new();
    let (frame_link, current) = controlled_frame(scene, model, q)?;
    let err = pose_error(goal.target_pose(), &current);
    let jac = model.jacobian(q, frame_link, Point3::from(current.translation.vector))?;

    for axis in 0..3 {
        let gradient = DVector::from_iterator(dof, (0..dof).map(|j| jac[(axis, j)]));
        let target = -config.goal_gain * err.position[axis];
        rows.push(ConstraintRow {
            name: format!("goal_pos_{axis}"),
            kind: RowKind::Goal,
            value: err.position[axis],
            gradient,
            lower: target,
            upper: target,
            weight: config.goal_weight,
            hard: false,
        });
    }
    for axis in 0..3 {
        // e = log(R_goal R^-1): to first order its rate is -omega, so the
        // row gradient is the negated angular Jacobian.
        let gradient = DVector::from_iterator(dof, (0..dof).map(|j| -jac[(axis + 3, j)]));
        let target = -config.goal_gain * err.rotation[axis];
        rows.push(ConstraintRow {
            name: format!("goal_rot_{axis}"),
            kind: RowKind::Goal,
            value: err.rotation[axis],
            gradient,
            lower: target,
            upper: target,
            weight: config.goal_weight,
            hard: false,
        });
    }

    if let PhaseGoal::Object {
        goal_angle,
        pivoting_enabled,
        ..
    } = goal
    {
        let pivot = model
            .pivot_joint_index()
            .expect("object phase requires an attached pivot");
        if *pivoting_enabled {
            let value = verticality_error(model, q, &scene.gravity)?;
            let mut gradient = DVector::zeros(dof);
            let h = 1e-6;
            let mut qp_ = q.clone();
            for j in 0..dof {
                qp_.values[j] = q.values[j] + h;
                let plus = verticality_error(model, &qp_, &scene.gravity)?;
                qp_.values[j] = q.values[j] - h;
                let minus = verticality_error(model, &qp_, &scene.gravity)?;
                qp_.values[j] = q.values[j];
                gradient[j] = (plus - minus) / (2.0 * h);
            }
            let target = -config.verticality_gain * value;
            rows.push(ConstraintRow {
                name: String::from("verticality"),
                kind: RowKind::Verticality,
                value,
                gradient,
                lower: target,
                upper: target,
                weight: config.verticality_weight,
                hard: false,
            });
        } else {
            let mut gradient = DVector::zeros(dof);
            gradient[pivot] = 1.0;
            rows.push(ConstraintRow {
                name: String::from("pivot_lock"),
                kind: RowKind::PivotLock,
                value: q.values[pivot],
                gradient,
                lower: 0.0,
                upper: 0.0,
                weight: 0.0,
                hard: true,
            });
        }
        if let Some(alpha_goal) = goal_angle {
            // Object vertical means pivot position = -alpha, so pin the
            // virtual joint position at the goal angle.
            let value = q.values[pivot] + alpha_goal;
            let mut gradient = DVector::zeros(dof);
            gradient[pivot] = 1.0;
            let target = -config.goal_gain * value;
            rows.push(ConstraintRow {
                name: String::from("goal_angle"),
                kind: RowKind::PivotAngle,
                value,
                gradient,
                lower: target,
                upper: target,
                weight: config.angle_weight,
                hard: false,
            });
        }
    }

    for (j, joint) in model.joints().iter().enumerate() {
        let mut gradient = DVector::zeros(dof);
        gradient[j] = 1.0;
        rows.push(ConstraintRow {
            name: format!("vel_{}", joint.name),
            kind: RowKind::VelocityLimit,
            value: 0.0,
            gradient,
            lower: -joint.velocity_limit,
            upper: joint.velocity_limit,
            weight: 0.0,
            hard: true,
        });
        if let Some((lo, hi)) = joint.limits {
            let mut gradient = DVector::zeros(dof);
            gradient[j] = 1.0;
            rows.push(ConstraintRow {
                name: format!("pos_{}", joint.name),
                kind: RowKind::PositionLimit,
                value: q.values[j],
                gradient,
                lower: (lo - q.values[j]) / timestep,
                upper: (hi - q.values[j]) / timestep,
                weight: 0.0,
                hard: true,
            });
        }
    }

    let pairs = min_distance_robot_scene(model, q, &scene.obstacles, config.distance_cutoff)?;
    let frames = model.frames(q)?;
    for pair in &pairs {
        let normal = pair.result.normal.as_ref();
        let (link_a, jac_b) = match pair.bodies {
            PairBodies::LinkObstacle { link, .. } => (link, None),
            PairBodies::LinkLink { link_a, link_b } => (link_a, Some(link_b)),
        };
        let ca = frames[link_a].transform_point(&pair.local_a);
        let ja = model.jacobian(q, link_a, ca)?;
        let mut gradient = DVector::zeros(dof);
        for j in 0..dof {
            gradient[j] = normal[0] * ja[(0, j)] + normal[1] * ja[(1, j)] + normal[2] * ja[(2, j)];
        }
        if let Some(link_b) = jac_b {
            let cb = frames[link_b].transform_point(&pair.local_b);
            let jb = model.jacobian(q, link_b, cb)?;
            for j in 0..dof {
                gradient[j] -=
                    normal[0] * jb[(0, j)] + normal[1] * jb[(1, j)] + normal[2] * jb[(2, j)];
            }
        }
        if gradient.norm() < 1e-8 {
            // Pair with no actuated relative motion (e.g. base body against
            // the floor); no row can help or harm.
            continue;
        }
        let d = pair.result.distance;
        rows.push(ConstraintRow {
            name: match pair.bodies {
                PairBodies::LinkObstacle { link, obstacle } => {
                    format!(
                        "col_{}_{}",
                        model.links()[link].name,
                        scene.obstacles[obstacle].name
                    )
                }
                PairBodies::LinkLink { link_a, link_b } => format!(
                    "selfcol_{}_{}",
                    model.links()[link_a].name,
                    model.links()[link_b].name
                ),
            },
            kind: RowKind::Collision,
            value: d,
            gradient,
            lower: -config.collision_gain * (d - config.safety_distance),
            upper: f64::INFINITY,
            weight: 0.0,
            hard: true,
        });
    }

    Ok(rows)
}

enum LoopEnd {
    Converged,
    Stalled { collision_active: bool },
    OutOfTime,
    HardInfeasible,
}

struct LoopResult {
    times: Vec<f64>,
    samples: Vec<Configuration>,
    end: LoopEnd,
}

/// Greedy integration loop shared by both phases.
fn integrate_phase(
    scene: &SceneDescription,
    model: &KinematicModel,
    q0: Configuration,
    goal: &PhaseGoal,
    config: &PlannerConfig,
    timestep: f64,
    max_duration: f64,
) -> Result<LoopResult, PlanError> {
    let mut q = q0;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut best_error = f64::INFINITY;
    let mut stall_time = 0.0;
    let steps = (max_duration / timestep).ceil() as usize;

    for step_index in 0..=steps {
        let t = step_index as f64 * timestep;
        times.push(t);
        samples.push(q.clone());

        let (_, current) = controlled_frame(scene, model, &q)?;
        let err = pose_error(goal.target_pose(), &current);
        if err.position.iter().chain(err.rotation.iter()).any(|v| !v.is_finite()) {
            log::debug!(
                "non-finite pose error at t={t:.2}: q={:?} current rot={:?} goal rot={:?}",
                q.values.as_slice(),
                current.rotation,
                goal.target_pose().rotation
            );
            return Ok(LoopResult {
                times,
                samples,
                end: LoopEnd::HardInfeasible,
            });
        }
        let angle_err = match goal {
            PhaseGoal::Object {
                goal_angle: Some(a),
                ..
            } => {
                let pivot = model.pivot_joint_index().unwrap();
                (q.values[pivot] + a).abs()
            }
            _ => 0.0,
        };
        let pos_err = err.position.norm();
        let rot_err = err.rotation.norm();
        if pos_err < config.position_tolerance
            && rot_err < config.orientation_tolerance
            && angle_err < config.angle_tolerance
        {
            return Ok(LoopResult {
                times,
                samples,
                end: LoopEnd::Converged,
            });
        }

        let rows = build_constraints(scene, model, &q, goal, config, timestep)?;
        let collision_active = rows.iter().any(|r| r.kind == RowKind::Collision);

        if log::log_enabled!(log::Level::Trace) && step_index % 20 == 0 {
            let min_d = rows
                .iter()
                .filter(|r| r.kind == RowKind::Collision)
                .map(|r| r.value)
                .fold(f64::INFINITY, f64::min);
            log::trace!(
                "t={t:5.2} pos={pos_err:.4} rot={rot_err:.4} ang={angle_err:.4} rows={} min_d={min_d:.3}",
                rows.len()
            );
        }

        let scalar = pos_err + 0.5 * rot_err + 0.5 * angle_err;
        if scalar < best_error - config.stall_tolerance {
            best_error = scalar;
            stall_time = 0.0;
        } else {
            stall_time += timestep;
            if stall_time >= config.stall_window {
                log::debug!(
                    "stall at t={t:.2}: pos={pos_err:.4} rot={rot_err:.4} ang={angle_err:.4} collisions={collision_active}"
                );
                if log::log_enabled!(log::Level::Debug) {
                    for r in rows.iter().filter(|r| {
                        r.kind == RowKind::Collision && r.value < config.safety_distance + 0.01
                    }) {
                        log::debug!("  binding pair {} d={:.4}", r.name, r.value);
                    }
                }
                return Ok(LoopResult {
                    times,
                    samples,
                    end: LoopEnd::Stalled { collision_active },
                });
            }
        }

        let solution = match qp::solve_step(&rows, model.dof(), config.regularization) {
            Ok(s) => s,
            Err(QpError::Numerical) => {
                // Degenerate constraint geometry at this configuration; the
                // planner is wedged as surely as by an infeasible set.
                log::debug!("numerically degenerate QP at t={t:.2}");
                return Ok(LoopResult {
                    times,
                    samples,
                    end: LoopEnd::HardInfeasible,
                });
            }
            Err(QpError::InfeasibleHard) => {
                log::debug!("hard-infeasible constraint set at t={t:.2}");
                if log::log_enabled!(log::Level::Trace) {
                    for r in rows.iter().filter(|r| r.hard) {
                        log::trace!(
                            "  hard row {} value={:.4} bounds [{:.3}, {:.3}] |g|={:.3}",
                            r.name,
                            r.value,
                            r.lower,
                            r.upper,
                            r.gradient.norm()
                        );
                    }
                }
                return Ok(LoopResult {
                    times,
                    samples,
                    end: LoopEnd::HardInfeasible,
                })
            }
            Err(e) => return Err(PlanError::Solver(e)),
        };

        if solution.qdot.iter().any(|v| !v.is_finite()) {
            log::debug!("non-finite joint rates at t={t:.2}: {:?}", solution.qdot);
            return Ok(LoopResult {
                times,
                samples,
                end: LoopEnd::HardInfeasible,
            });
        }
        q = Configuration::new(&q.values + &solution.qdot * timestep);
        q.clamp_to_limits(model);
    }

    Ok(LoopResult {
        times,
        samples,
        end: LoopEnd::OutOfTime,
    })
}

/// Gripper-body spheres expressed relative to the grasp frame at the
/// nominal wrist posture, used for start/goal pose gates.
fn gripper_gate_spheres(
    scene: &SceneDescription,
    model: &KinematicModel,
) -> Result<Vec<(Point3<f64>, f64)>, PlanError> {
    let q = Configuration::new(scene.robot_home.values.clone());
    let frames = model.frames(&q)?;
    let tool_link = model.tool_link_index();
    let tool = frames[tool_link] * scene.tool_offset;
    let inv = tool.inverse();
    let mut spheres = Vec::new();
    // Wrist cluster and hand links move rigidly with the tool at the
    // nominal (zero) wrist yaw/roll.
    let first = tool_link.saturating_sub(2);
    for li in first..=tool_link {
        let rel = inv * frames[li];
        for s in &model.links()[li].spheres {
            spheres.push((rel.transform_point(&s.center), s.radius));
        }
    }
    Ok(spheres)
}

/// True when any gate sphere placed at `tool_pose` penetrates an obstacle.
fn gate_collides(
    scene: &SceneDescription,
    spheres: &[(Point3<f64>, f64)],
    tool_pose: &Isometry3<f64>,
) -> bool {
    for (center, radius) in spheres {
        let cw = tool_pose.transform_point(center);
        for bx in &scene.obstacles {
            if crate::scene::sphere_box_distance(cw, *radius, bx).distance < -1e-6 {
                return true;
            }
        }
    }
    false
}

/// True when the object's bounding spheres at `pose` penetrate an obstacle.
fn object_pose_collides(
    scene: &SceneDescription,
    object: &ObjectModel,
    pose: &Isometry3<f64>,
) -> bool {
    for s in object.bounding_spheres() {
        let cw = pose.transform_point(&s.center);
        for bx in &scene.obstacles {
            if crate::scene::sphere_box_distance(cw, s.radius, bx).distance < -1e-4 {
                return true;
            }
        }
    }
    false
}

/// Candidate start angles: a uniform grid over [-pi/2, pi/2], scanned from
/// the vertical gripper outward.
fn start_angle_candidates(n: usize) -> Vec<f64> {
    let n = n.max(1);
    let mut grid: Vec<f64> = (0..n)
        .map(|i| {
            -core::f64::consts::FRAC_PI_2
                + core::f64::consts::PI * i as f64 / (n.max(2) - 1) as f64
        })
        .collect();
    grid.sort_by(|a, b| {
        (a.abs(), *a > 0.0)
            .partial_cmp(&(b.abs(), *b > 0.0))
            .unwrap()
    });
    grid
}

/// Plan one pick-and-place request.
///
/// Phase 1 reaches a collision-free grasp at the start angle (or the first
/// workable candidate when free); phase 2 attaches the virtual pivot and
/// transports the object to the goal. The returned trajectory covers the
/// transport phase, including the virtual joint.
pub fn plan(
    scene: &SceneDescription,
    request: &PlanRequest,
    config: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    request.validate()?;
    let object = scene
        .object(&request.object)
        .ok_or_else(|| PlanError::UnknownObject(request.object.clone()))?;
    object.validate()?;

    let base_model = &scene.robot;
    let gate_spheres = gripper_gate_spheres(scene, base_model)?;

    // Goal gates: the object body must fit at the goal, and so must the
    // gripper when the goal angle is pinned.
    if object_pose_collides(scene, object, &request.goal_pose) {
        return Ok(PlanResult::failure(PlanOutcome::InfeasibleGoal));
    }
    if let Some(alpha_goal) = request.goal_angle.fixed() {
        let tool_goal = tool_pose_for_grasp(&request.goal_pose, alpha_goal);
        if gate_collides(scene, &gate_spheres, &tool_goal) {
            return Ok(PlanResult::failure(PlanOutcome::InfeasibleGoal));
        }
    }

    // Phase 1: find a reachable, collision-free start grasp.
    let candidates = match request.start_grasp_angle {
        AngleSpec::Fixed(a) => alloc::vec![a],
        AngleSpec::Free => start_angle_candidates(config.start_candidates),
    };
    let mut start: Option<(f64, Configuration)> = None;
    for alpha in candidates {
        let tool_start = tool_pose_for_grasp(&object.start_pose, alpha);
        if gate_collides(scene, &gate_spheres, &tool_start) {
            continue;
        }
        let reach = integrate_phase(
            scene,
            base_model,
            Configuration::new(scene.robot_home.values.clone()),
            &PhaseGoal::Tool { pose: tool_start },
            config,
            request.timestep,
            request.max_duration,
        )?;
        if matches!(reach.end, LoopEnd::Converged) {
            start = Some((alpha, reach.samples.last().unwrap().clone()));
            break;
        }
    }
    let Some((alpha_start, q_grasp)) = start else {
        return Ok(PlanResult::failure(PlanOutcome::InfeasibleStart));
    };

    // Phase 2: attach the pivot and transport the object.
    let model = attach_object(scene, object)?;
    let pivot = model.pivot_joint_index().unwrap();
    let mut q0 = DVector::zeros(model.dof());
    q0.rows_mut(0, base_model.dof()).copy_from(&q_grasp.values);
    q0[pivot] = -alpha_start;

    let mut result = transport(
        scene,
        &model,
        Configuration::new(q0),
        &TransportGoal {
            pose: request.goal_pose,
            goal_angle: request.goal_angle.fixed(),
            pivoting_enabled: request.pivoting_enabled,
        },
        request.timestep,
        request.max_duration,
        config,
    )?;
    result.chosen_start_angle = Some(alpha_start);
    if result.outcome == PlanOutcome::Success {
        if let AngleSpec::Fixed(a) = request.goal_angle {
            result.chosen_goal_angle = Some(a);
        }
    } else {
        result.chosen_goal_angle = None;
    }
    Ok(result)
}

/// The robot chain with `object` attached through the virtual pivot.
pub fn attach_object(
    scene: &SceneDescription,
    object: &ObjectModel,
) -> Result<KinematicModel, PlanError> {
    Ok(scene.robot.attach_pivot(
        scene.tool_offset,
        object.cog_offset,
        object.bounding_spheres(),
        format!("object_{}", object.name),
    )?)
}

/// One transport goal for an already-grasped object.
#[derive(Clone, Debug)]
pub struct TransportGoal {
    pub pose: Isometry3<f64>,
    pub goal_angle: Option<f64>,
    pub pivoting_enabled: bool,
}

/// Move a grasped object (model with attached pivot, configuration `q0`)
/// to a goal. This is the second phase of [`plan`], exposed so a task can
/// chain several motion goals without re-grasping.
pub fn transport(
    scene: &SceneDescription,
    model: &KinematicModel,
    q0: Configuration,
    goal: &TransportGoal,
    timestep: f64,
    max_duration: f64,
    config: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    let pivot = model
        .pivot_joint_index()
        .ok_or(PlanError::BadRequest("transport requires an attached pivot"))?;
    let phase_goal = PhaseGoal::Object {
        pose: goal.pose,
        goal_angle: goal.goal_angle,
        pivoting_enabled: goal.pivoting_enabled,
    };
    let run = integrate_phase(scene, model, q0, &phase_goal, config, timestep, max_duration)?;
    let outcome = match run.end {
        LoopEnd::Converged => PlanOutcome::Success,
        LoopEnd::Stalled { collision_active } => {
            if collision_active {
                PlanOutcome::CollisionStuck
            } else {
                PlanOutcome::Timeout
            }
        }
        LoopEnd::HardInfeasible => PlanOutcome::CollisionStuck,
        LoopEnd::OutOfTime => PlanOutcome::Timeout,
    };
    if outcome != PlanOutcome::Success {
        return Ok(PlanResult {
            outcome,
            trajectory: None,
            chosen_start_angle: None,
            chosen_goal_angle: None,
        });
    }
    let final_q = run.samples.last().unwrap();
    let chosen_goal = goal.goal_angle.unwrap_or(-final_q.values[pivot]);
    Ok(PlanResult {
        outcome: PlanOutcome::Success,
        trajectory: Some(Trajectory {
            times: run.times,
            samples: run.samples,
            pivot_index: Some(pivot),
            metadata: TrajectoryMetadata {
                planning_time_s: 0.0,
                converged: true,
            },
        }),
        chosen_start_angle: None,
        chosen_goal_angle: Some(chosen_goal),
    })
}
