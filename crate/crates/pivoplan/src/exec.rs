//! Simulated execution of planned trajectories.
//!
//! The planned 20 Hz whole-body trajectory is upsampled to the 500 Hz
//! sensor cadence; each tick synthesizes the contact wrench from the slider
//! state (plus seeded sensor noise), feeds it to the grasp controller under
//! the modality currently dispatched from the switch schedule, and advances
//! the pendulum with the commanded force. A short release tail at the end
//! zeroes the load so the force traces show the drop at release.

use nalgebra::UnitQuaternion;
use pivoplan_core::grasp::{ContactWrench, GraspController, LimitSurfaceParams, Modality};
use pivoplan_core::kinematics::Configuration;
use pivoplan_core::planner::Trajectory;
use pivoplan_core::scene::{ObjectModel, SceneDescription};
use pivoplan_core::slider::{
    step as slider_step, GripperAttitude, SliderBody, SliderState, SIM_DT,
};
use pivoplan_core::switch::{compute_schedule, Hysteresis, ScheduleCursor, SwitchSchedule};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform sensor noise amplitudes at 500 Hz.
pub const FT_NOISE: f64 = 0.05;
pub const TAU_NOISE: f64 = 0.002;

/// Release tail appended after the trajectory ends.
const RELEASE_TAIL_S: f64 = 0.5;

#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub t: f64,
    pub theta: f64,
    pub phi: f64,
    pub vj: f64,
    pub fn_commanded: f64,
    pub fn_sa: f64,
    pub fn_gp: f64,
    pub modality: Modality,
    pub ft_load: f64,
    pub tau_load: f64,
}

#[derive(Clone, Debug)]
pub struct ExecSummary {
    pub final_deviation: f64,
    pub max_deviation: f64,
    pub slipped_out: bool,
    pub saturated_steps: usize,
    pub gp_intervals: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct ExecResult {
    pub rows: Vec<TraceRow>,
    pub schedule: SwitchSchedule,
    pub summary: ExecSummary,
}

/// Per-sample tool kinematics extracted from a trajectory.
struct ToolTrack {
    times: Vec<f64>,
    orientations: Vec<UnitQuaternion<f64>>,
    accel: Vec<f64>,
    pivot: Vec<f64>,
    pivot_rate: Vec<f64>,
}

fn tool_track(scene: &SceneDescription, object: &ObjectModel, traj: &Trajectory) -> ToolTrack {
    let model = scene
        .robot
        .attach_pivot(
            scene.tool_offset,
            object.cog_offset,
            object.bounding_spheres(),
            "object",
        )
        .expect("pivot attaches");
    let tool_link = model.tool_link_index();
    let mut orientations = Vec::with_capacity(traj.samples.len());
    let mut positions = Vec::with_capacity(traj.samples.len());
    for q in &traj.samples {
        let frames = model.frames(q).expect("trajectory matches model");
        let tool = frames[tool_link] * scene.tool_offset;
        orientations.push(tool.rotation);
        positions.push(tool.translation.vector);
    }
    let dt = traj.timestep().max(1e-6);
    let n = positions.len();
    let mut accel = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let a = (positions[i + 1] - positions[i] * 2.0 + positions[i - 1]) / (dt * dt);
        accel[i] = a.norm();
    }
    let pivot = traj.pivot_positions();
    let mut pivot_rate = vec![0.0; n];
    for i in 0..n {
        pivot_rate[i] = if i == 0 {
            (pivot[1.min(n - 1)] - pivot[0]) / dt
        } else if i == n - 1 {
            (pivot[n - 1] - pivot[n - 2]) / dt
        } else {
            (pivot[i + 1] - pivot[i - 1]) / (2.0 * dt)
        };
    }
    ToolTrack {
        times: traj.times.clone(),
        orientations,
        accel,
        pivot,
        pivot_rate,
    }
}

impl ToolTrack {
    fn sample(&self, t: f64) -> (UnitQuaternion<f64>, f64, f64, f64) {
        let n = self.times.len();
        if n == 1 {
            return (self.orientations[0], 0.0, self.pivot[0], 0.0);
        }
        let dt = self.times[1] - self.times[0];
        let clamped = t.clamp(self.times[0], self.times[n - 1]);
        let idx = (((clamped - self.times[0]) / dt).floor() as usize).min(n - 2);
        let s = ((clamped - self.times[idx]) / dt).clamp(0.0, 1.0);
        let rot = self.orientations[idx].slerp(&self.orientations[idx + 1], s);
        let accel = self.accel[idx] * (1.0 - s) + self.accel[idx + 1] * s;
        let pivot = self.pivot[idx] * (1.0 - s) + self.pivot[idx + 1] * s;
        let rate = self.pivot_rate[idx] * (1.0 - s) + self.pivot_rate[idx + 1] * s;
        (rot, accel, pivot, rate)
    }
}

pub struct ExecOptions {
    pub seed: u64,
    pub threshold: f64,
    pub hysteresis: bool,
    /// Friction coefficient the controller believes in; the slider always
    /// uses the object's true value.
    pub controller_mu: Option<f64>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: pivoplan_core::switch::DEFAULT_THRESHOLD,
            hysteresis: false,
            controller_mu: None,
        }
    }
}

/// Execute a planned trajectory through schedule dispatch, grasp control and
/// the pendulum simulation.
pub fn execute_trajectory(
    scene: &SceneDescription,
    object: &ObjectModel,
    traj: &Trajectory,
    options: &ExecOptions,
) -> ExecResult {
    let hysteresis = options
        .hysteresis
        .then(|| Hysteresis::with_threshold(options.threshold));
    let schedule =
        compute_schedule(traj, options.threshold, hysteresis).expect("trajectory has a pivot");

    let track = tool_track(scene, object, traj);
    let body = SliderBody {
        mass: object.mass,
        cog_distance: object.cog_offset.norm(),
        inertia: object.inertia_about_pivot,
    };
    let true_params = LimitSurfaceParams::with_mu(object.mu);
    let ctrl_params = LimitSurfaceParams {
        mu: options.controller_mu.unwrap_or(object.mu),
        ..true_params
    };
    let mut controller = GraspController::new(ctrl_params).expect("valid params");
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let duration = traj.duration() + RELEASE_TAIL_S;
    let steps = (duration / SIM_DT).ceil() as usize;
    let mut rows = Vec::with_capacity(steps);

    // The object starts aligned with gravity (it stood on the floor), so
    // theta cancels the initial gripper tilt.
    let (rot0, _, _, _) = track.sample(0.0);
    let att0 = GripperAttitude::from_orientation(&rot0, &scene.gravity);
    let mut state = SliderState::at_rest(-att0.tilt);

    let mut cursor = ScheduleCursor::new(&schedule);
    let mut modality = Modality::SlippingAvoidance;
    // Loads measured by the previous step's contact.
    let mut ft_meas = body.mass * 9.81;
    let mut tau_meas = 0.0;
    let mut max_dev = 0.0f64;
    let mut final_dev = 0.0f64;
    let mut saturated = 0usize;

    for i in 0..steps {
        let t = i as f64 * SIM_DT;
        let released = t > traj.duration();
        let (rot, accel, _pivot_pos, pivot_rate) = track.sample(t);
        let attitude = GripperAttitude::from_orientation(&rot, &scene.gravity);

        while cursor.advance(t).map(|e| modality = e.command).is_some() {}

        let (ft_noisy, tau_noisy) = if released || state.slipped_out {
            (0.0, 0.0)
        } else {
            (
                (ft_meas + rng.random_range(-FT_NOISE..FT_NOISE)).max(0.0),
                (tau_meas + rng.random_range(-TAU_NOISE..TAU_NOISE)).max(0.0),
            )
        };
        let wrench = ContactWrench::new(ft_noisy, tau_noisy, t).expect("non-negative");
        let out = controller.compute(&wrench, modality);
        if out.saturated {
            saturated += 1;
        }

        let (next, loads) = if released {
            (state, pivoplan_core::slider::StepLoads { ft: 0.0, tau: 0.0, phi: 0.0 })
        } else {
            let inertial = body.mass * accel;
            slider_step(
                &state,
                &attitude,
                out.fn_commanded,
                SIM_DT,
                &body,
                &true_params,
                inertial,
            )
            .expect("valid step")
        };
        if !released && !next.slipped_out {
            final_dev = loads.phi.abs();
            max_dev = max_dev.max(loads.phi.abs());
        }
        rows.push(TraceRow {
            t,
            theta: next.theta,
            phi: loads.phi,
            vj: pivot_rate,
            fn_commanded: out.fn_commanded,
            fn_sa: out.fn_sa,
            fn_gp: out.fn_gp,
            modality,
            ft_load: loads.ft,
            tau_load: loads.tau,
        });
        state = next;
        ft_meas = loads.ft;
        tau_meas = loads.tau;
    }

    let gp_intervals = schedule.pivoting_intervals(traj.duration());
    ExecResult {
        rows,
        schedule,
        summary: ExecSummary {
            final_deviation: final_dev,
            max_deviation: max_dev,
            slipped_out: state.slipped_out,
            saturated_steps: saturated,
            gp_intervals,
        },
    }
}

/// Execute a synthetic attitude/schedule pair (used by the stability
/// experiment, which commands tool motions directly instead of planning).
pub struct SyntheticRun {
    /// Per-20 Hz-sample gripper tilt about the closing axis.
    pub tilt: Vec<f64>,
    /// Per-sample fraction of gravity in the contact plane.
    pub in_plane: Vec<f64>,
    /// Per-sample commanded Cartesian acceleration magnitude.
    pub accel: Vec<f64>,
    pub timestep: f64,
}

impl SyntheticRun {
    /// Trajectory stub whose virtual joint mirrors the commanded tilt, which
    /// is what the modality switch would see from the planner.
    pub fn to_trajectory(&self) -> Trajectory {
        let n = self.tilt.len();
        Trajectory {
            times: (0..n).map(|i| i as f64 * self.timestep).collect(),
            samples: self
                .tilt
                .iter()
                .map(|&a| Configuration::from_slice(&[0.0, -a]))
                .collect(),
            pivot_index: Some(1),
            metadata: Default::default(),
        }
    }
}

/// Closed-loop rollout of a synthetic run; returns the trace and summary.
pub fn execute_synthetic(
    object: &ObjectModel,
    run: &SyntheticRun,
    options: &ExecOptions,
) -> ExecResult {
    let traj = run.to_trajectory();
    let hysteresis = options
        .hysteresis
        .then(|| Hysteresis::with_threshold(options.threshold));
    let schedule =
        compute_schedule(&traj, options.threshold, hysteresis).expect("synthetic pivot");

    let body = SliderBody {
        mass: object.mass,
        cog_distance: object.cog_offset.norm(),
        inertia: object.inertia_about_pivot,
    };
    let true_params = LimitSurfaceParams::with_mu(object.mu);
    let ctrl_params = LimitSurfaceParams {
        mu: options.controller_mu.unwrap_or(object.mu),
        ..true_params
    };
    let mut controller = GraspController::new(ctrl_params).expect("valid params");
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let duration = run.timestep * (run.tilt.len().saturating_sub(1)) as f64;
    let steps = (duration / SIM_DT).ceil() as usize;
    let sample = |xs: &[f64], t: f64| -> f64 {
        let n = xs.len();
        if n == 1 {
            return xs[0];
        }
        let idx = ((t / run.timestep).floor() as usize).min(n - 2);
        let s = ((t - idx as f64 * run.timestep) / run.timestep).clamp(0.0, 1.0);
        xs[idx] * (1.0 - s) + xs[idx + 1] * s
    };

    let mut state = SliderState::at_rest(-run.tilt[0]);
    let mut cursor = ScheduleCursor::new(&schedule);
    let mut modality = Modality::SlippingAvoidance;
    let mut ft_meas = body.mass * 9.81 * run.in_plane[0];
    let mut tau_meas = 0.0;
    let mut rows = Vec::with_capacity(steps);
    let mut max_dev = 0.0f64;
    let mut final_dev = 0.0f64;
    let mut saturated = 0usize;

    for i in 0..steps {
        let t = i as f64 * SIM_DT;
        let attitude = GripperAttitude {
            tilt: sample(&run.tilt, t),
            in_plane: sample(&run.in_plane, t),
        };
        while cursor.advance(t).map(|e| modality = e.command).is_some() {}
        let ft_noisy = (ft_meas + rng.random_range(-FT_NOISE..FT_NOISE)).max(0.0);
        let tau_noisy = (tau_meas + rng.random_range(-TAU_NOISE..TAU_NOISE)).max(0.0);
        let wrench = ContactWrench::new(ft_noisy, tau_noisy, t).expect("non-negative");
        let out = controller.compute(&wrench, modality);
        if out.saturated {
            saturated += 1;
        }
        let inertial = body.mass * sample(&run.accel, t);
        let (next, loads) = slider_step(
            &state,
            &attitude,
            out.fn_commanded,
            SIM_DT,
            &body,
            &true_params,
            inertial,
        )
        .expect("valid step");
        if !next.slipped_out {
            final_dev = loads.phi.abs();
            max_dev = max_dev.max(loads.phi.abs());
        }
        rows.push(TraceRow {
            t,
            theta: next.theta,
            phi: loads.phi,
            vj: 0.0,
            fn_commanded: out.fn_commanded,
            fn_sa: out.fn_sa,
            fn_gp: out.fn_gp,
            modality,
            ft_load: loads.ft,
            tau_load: loads.tau,
        });
        state = next;
        ft_meas = loads.ft;
        tau_meas = loads.tau;
    }

    let gp_intervals = schedule.pivoting_intervals(duration);
    ExecResult {
        rows,
        schedule,
        summary: ExecSummary {
            final_deviation: final_dev,
            max_deviation: max_dev,
            slipped_out: state.slipped_out,
            saturated_steps: saturated,
            gp_intervals,
        },
    }
}
