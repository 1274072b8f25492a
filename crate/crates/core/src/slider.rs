//! Friction-damped pendulum simulation of a grasped object.
//!
//! While the fingers squeeze with grasp force `fn`, the object can rotate
//! about the gripper closing axis against the torsional friction capacity
//! `tau_max(fn)`. Grasped away from its center of gravity it behaves like a
//! pendulum: when the capacity is below the gravitational torque the object
//! slides toward its hanging equilibrium, otherwise it rigidly follows the
//! gripper. The simulation integrates the relative angle with semi-implicit
//! Euler at the 500 Hz sensor cadence and reports the contact loads a
//! sensorized finger would measure, which is what lets the full gripper
//! experiments run without hardware.

use alloc::vec::Vec;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::grasp::{tau_max, LimitSurfaceParams};

/// Fixed integration/sensor step of 500 Hz.
pub const SIM_DT: f64 = 0.002;

/// Relative velocity below which the contact can (re)stick.
const STICK_VELOCITY: f64 = 1e-5;

/// Share of the torsional channel that erodes translational capacity while
/// the contact rotates. Full elliptical coupling would zero the tangential
/// capacity during every pivot and drop every object; a sustained rotational
/// slide engages only part of the torsional budget.
pub const TORSION_COUPLING: f64 = 0.15;

/// Viscous damping of the sliding contact per newton of grasp force
/// (N m s / (N rad)), from the viscoelasticity of the soft pads. Without it
/// a released pendulum would ring for tens of seconds on Coulomb friction
/// alone.
pub const PAD_DAMPING: f64 = 0.004;

/// Mass properties of the grasped object as seen by the pivot contact.
#[derive(Clone, Copy, Debug)]
pub struct SliderBody {
    pub mass: f64,
    /// Distance from the grasp point to the center of gravity.
    pub cog_distance: f64,
    /// Rotational inertia about the pivot axis through the grasp point.
    pub inertia: f64,
}

impl SliderBody {
    pub fn validate(&self) -> Result<(), SliderError> {
        if !(self.mass > 0.0 && self.cog_distance > 0.0 && self.inertia > 0.0) {
            return Err(SliderError::BadBody);
        }
        Ok(())
    }
}

/// Object angle relative to the gripper about the pivot axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliderState {
    pub theta: f64,
    pub theta_dot: f64,
    /// Absorbing: once the object slips out of the fingers it stays out.
    pub slipped_out: bool,
}

impl SliderState {
    pub fn at_rest(theta: f64) -> Self {
        Self {
            theta,
            theta_dot: 0.0,
            slipped_out: false,
        }
    }
}

/// Gripper attitude decomposed for the one-dimensional pendulum.
#[derive(Clone, Copy, Debug)]
pub struct GripperAttitude {
    /// Signed angle from the in-plane gravity direction to the gripper's
    /// reference hang axis, about the closing axis. The object's world
    /// verticality error is `tilt + theta`.
    pub tilt: f64,
    /// `sin` of the angle between gravity and the closing axis: the fraction
    /// of the weight that loads the contact tangentially (1 while the
    /// closing axis stays horizontal).
    pub in_plane: f64,
}

impl GripperAttitude {
    /// Decompose a world gripper orientation. The gripper frame carries the
    /// closing axis on y and points its approach axis along -z.
    pub fn from_orientation(orientation: &UnitQuaternion<f64>, gravity: &Vector3<f64>) -> Self {
        let g_dir = gravity.normalize();
        let closing = orientation * Vector3::y();
        let in_plane_vec = g_dir - closing * g_dir.dot(&closing);
        let in_plane = in_plane_vec.norm();
        if in_plane < 1e-9 {
            return Self {
                tilt: 0.0,
                in_plane: 0.0,
            };
        }
        let g_ip = in_plane_vec / in_plane;
        let hang_ref = orientation * -Vector3::z();
        let tilt = libm::atan2(g_ip.cross(&hang_ref).dot(&closing), g_ip.dot(&hang_ref));
        Self { tilt, in_plane }
    }
}

/// Contact loads produced by one integration step, in the convention of the
/// force/tactile sensor: tangential force and torsional moment magnitudes.
#[derive(Clone, Copy, Debug)]
pub struct StepLoads {
    /// Tangential load on the contact: in-plane weight plus any inertial
    /// surcharge from commanded base/arm acceleration.
    pub ft: f64,
    /// Torsional moment actually transmitted by the contact.
    pub tau: f64,
    /// World verticality error of the object.
    pub phi: f64,
}

#[derive(Clone, Debug, Error)]
pub enum SliderError {
    #[error("slider body parameters must be positive")]
    BadBody,
    #[error("input traces must share one 500 Hz timeline")]
    TraceMismatch,
    #[error("integration step must be in (0, 5] ms")]
    BadStep,
}

/// Advance the relative angle by one step of `dt` under grasp force
/// `fn_force`, returning the new state and the measured contact loads.
///
/// `inertial_ft` is an optional additive tangential load modelling commanded
/// Cartesian acceleration of the gripper (`mass * |accel|`).
pub fn step(
    state: &SliderState,
    gripper: &GripperAttitude,
    fn_force: f64,
    dt: f64,
    body: &SliderBody,
    true_params: &LimitSurfaceParams,
    inertial_ft: f64,
) -> Result<(SliderState, StepLoads), SliderError> {
    if !(dt > 0.0 && dt <= 5e-3) {
        return Err(SliderError::BadStep);
    }
    body.validate()?;
    let fn_force = fn_force.max(0.0);

    if state.slipped_out {
        return Ok((
            *state,
            StepLoads {
                ft: 0.0,
                tau: 0.0,
                phi: 0.0,
            },
        ));
    }

    let g = crate::scene::STANDARD_GRAVITY;
    let g_ip = g * gripper.in_plane;
    let phi = gripper.tilt + state.theta;
    let gravity_torque = -body.mass * g_ip * body.cog_distance * libm::sin(phi);
    let capacity = tau_max(fn_force, true_params);

    let mut theta = state.theta;
    let mut theta_dot = state.theta_dot;
    let transmitted;

    if theta_dot.abs() < STICK_VELOCITY && gravity_torque.abs() <= capacity {
        // Static friction holds: the object co-rotates with the gripper.
        theta_dot = 0.0;
        transmitted = gravity_torque.abs();
    } else {
        let direction = if theta_dot.abs() < STICK_VELOCITY {
            gravity_torque.signum()
        } else {
            theta_dot.signum()
        };
        let accel = (gravity_torque - direction * capacity) / body.inertia;
        // Implicit viscous term keeps the damped update unconditionally
        // stable at the 2 ms step.
        let damping = PAD_DAMPING * fn_force / body.inertia;
        let new_dot = (theta_dot + accel * dt) / (1.0 + damping * dt);
        // Re-stick when the slide crosses zero and static friction can hold.
        if theta_dot != 0.0
            && new_dot.signum() != theta_dot.signum()
            && gravity_torque.abs() <= capacity
        {
            theta_dot = 0.0;
            transmitted = gravity_torque.abs();
        } else {
            theta_dot = new_dot;
            transmitted = capacity;
        }
    }
    theta += theta_dot * dt;

    let ft_load = body.mass * g * gripper.in_plane + inertial_ft.max(0.0);
    let tau_engaged = transmitted.min(capacity);

    // Translational slip-out check on the softened limit-surface ellipse.
    let slipped = if fn_force <= 1e-9 {
        ft_load > 1e-9
    } else {
        let t1 = ft_load / (true_params.mu * fn_force);
        let t2 = if capacity > 0.0 {
            tau_engaged / capacity
        } else {
            0.0
        };
        t1 * t1 + TORSION_COUPLING * t2 * t2 > 1.0
    };

    let next = SliderState {
        theta,
        theta_dot,
        slipped_out: slipped,
    };
    Ok((
        next,
        StepLoads {
            ft: ft_load,
            tau: tau_engaged,
            phi: gripper.tilt + theta,
        },
    ))
}

/// Inputs of a full rollout: gripper attitude and grasp-force traces on one
/// shared 500 Hz timeline.
#[derive(Clone, Debug)]
pub struct PivotSimInput {
    pub attitude_trace: Vec<GripperAttitude>,
    pub fn_trace: Vec<f64>,
    pub inertial_ft_trace: Option<Vec<f64>>,
    pub body: SliderBody,
    pub true_params: LimitSurfaceParams,
    pub initial: SliderState,
}

/// One record per step of a rollout.
#[derive(Clone, Copy, Debug)]
pub struct PivotRecord {
    pub time: f64,
    pub state: SliderState,
    pub loads: StepLoads,
    pub fn_force: f64,
}

/// Rollout summary.
#[derive(Clone, Copy, Debug)]
pub struct PivotSummary {
    /// Magnitude of the world verticality error at the end.
    pub final_deviation: f64,
    pub slipped_out: bool,
}

/// Roll the pendulum through the full input traces.
pub fn simulate_pivot(input: &PivotSimInput) -> Result<(Vec<PivotRecord>, PivotSummary), SliderError> {
    if input.attitude_trace.len() != input.fn_trace.len() {
        return Err(SliderError::TraceMismatch);
    }
    if let Some(extra) = &input.inertial_ft_trace {
        if extra.len() != input.fn_trace.len() {
            return Err(SliderError::TraceMismatch);
        }
    }
    let mut records = Vec::with_capacity(input.fn_trace.len());
    let mut state = input.initial;
    let mut last_phi = 0.0;
    for (i, (att, &fnf)) in input
        .attitude_trace
        .iter()
        .zip(input.fn_trace.iter())
        .enumerate()
    {
        let inertial = input
            .inertial_ft_trace
            .as_ref()
            .map(|t| t[i])
            .unwrap_or(0.0);
        let (next, loads) = step(&state, att, fnf, SIM_DT, &input.body, &input.true_params, inertial)?;
        state = next;
        if !state.slipped_out {
            last_phi = loads.phi;
        }
        records.push(PivotRecord {
            time: i as f64 * SIM_DT,
            state,
            loads,
            fn_force: fnf,
        });
    }
    Ok((
        records,
        PivotSummary {
            final_deviation: libm::fabs(last_phi),
            slipped_out: state.slipped_out,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn pads(mu: f64) -> LimitSurfaceParams {
        LimitSurfaceParams::with_mu(mu)
    }

    fn body_e() -> SliderBody {
        SliderBody {
            mass: 0.25,
            cog_distance: 0.075,
            inertia: 0.0025,
        }
    }

    fn level() -> GripperAttitude {
        GripperAttitude {
            tilt: 0.0,
            in_plane: 1.0,
        }
    }

    #[test]
    fn vertical_object_with_strong_grip_never_moves() {
        let body = body_e();
        let p = pads(0.8);
        let mut state = SliderState::at_rest(0.0);
        for _ in 0..2500 {
            let (next, _) = step(&state, &level(), 15.0, SIM_DT, &body, &p, 0.0).unwrap();
            state = next;
        }
        assert_eq!(state.theta, 0.0);
        assert!(!state.slipped_out);
    }

    #[test]
    fn free_pendulum_small_angle_period() {
        // fn = 0: no friction at all, pure pendulum. Small-angle period is
        // 2 pi sqrt(I / (m g d)); measure it from sign crossings.
        let body = body_e();
        let p = pads(0.8);
        let mut state = SliderState::at_rest(0.05);
        let mut crossings = Vec::new();
        let mut prev = state.theta;
        for i in 0..20000 {
            let (next, loads) = step(&state, &level(), 0.0, SIM_DT, &body, &p, 0.0).unwrap();
            // fn = 0 with a loaded contact flags slip; ignore the flag for
            // the pure pendulum oracle.
            state = SliderState {
                slipped_out: false,
                ..next
            };
            let _ = loads;
            if prev > 0.0 && state.theta <= 0.0 {
                crossings.push(i as f64 * SIM_DT);
            }
            prev = state.theta;
        }
        assert!(crossings.len() >= 3);
        let period = crossings[2] - crossings[1];
        let expected = 2.0
            * core::f64::consts::PI
            * libm::sqrt(body.inertia / (body.mass * 9.81 * body.cog_distance));
        assert_relative_eq!(period, expected, epsilon = 0.01 * expected);
    }

    #[test]
    fn strong_friction_rigidly_follows_gripper() {
        let body = body_e();
        let p = pads(0.8);
        // Large fn on a compact object: tau_max exceeds the maximum
        // gravity torque.
        let body = SliderBody {
            cog_distance: 0.055,
            ..body
        };
        let fnf = 19.0;
        assert!(tau_max(fnf, &p) > body.mass * 9.81 * body.cog_distance);
        let mut state = SliderState::at_rest(0.0);
        for i in 0..1000 {
            let tilt = 0.8 * (i as f64 * SIM_DT);
            let att = GripperAttitude {
                tilt,
                in_plane: 1.0,
            };
            let (next, _) = step(&state, &att, fnf, SIM_DT, &body, &p, 0.0).unwrap();
            state = next;
        }
        assert_eq!(state.theta, 0.0);
    }

    #[test]
    fn gp_force_lets_object_hang_vertical() {
        // Gripper rotates pi/2 over 4 s at the gripper-pivoting force: the
        // object should stay near vertical while the gripper turns.
        let body = body_e();
        let mu = 0.8;
        let p = pads(mu);
        let fn_gp = 1.2 * body.mass * 9.81 / mu;
        let steps = 2000;
        let mut state = SliderState::at_rest(0.0);
        let mut phi_max = 0.0f64;
        let mut slipped = false;
        for i in 0..steps {
            let tilt = core::f64::consts::FRAC_PI_2 * i as f64 / (steps - 1) as f64;
            let att = GripperAttitude {
                tilt,
                in_plane: 1.0,
            };
            let (next, loads) = step(&state, &att, fn_gp, SIM_DT, &body, &p, 0.0).unwrap();
            state = next;
            phi_max = phi_max.max(loads.phi.abs());
            slipped |= state.slipped_out;
        }
        assert!(!slipped);
        assert!(phi_max < 0.2, "max verticality deviation {phi_max}");
        // The relative angle absorbed most of the rotation.
        assert!(state.theta < -1.2);
    }

    #[test]
    fn underestimated_mu_suppresses_pivoting() {
        // Object B with mu commanded from 0.25 instead of 0.9: the clamp is
        // so strong the object is dragged far from vertical.
        let body = SliderBody {
            mass: 0.4,
            cog_distance: 0.085,
            inertia: 0.0046,
        };
        let true_p = pads(0.9);
        let fn_cmd = (1.2 * body.mass * 9.81 / 0.25).min(true_p.fn_max);
        let steps = 3000;
        let mut state = SliderState::at_rest(0.0);
        let mut last_phi = 0.0;
        for i in 0..steps {
            let tilt = -1.4 * (i as f64 / (steps - 1) as f64).min(1.0);
            let att = GripperAttitude {
                tilt,
                in_plane: 1.0,
            };
            let (next, loads) = step(&state, &att, fn_cmd, SIM_DT, &body, &true_p, 0.0).unwrap();
            state = next;
            last_phi = loads.phi;
        }
        assert!(!state.slipped_out);
        assert!(
            last_phi.abs() > 0.5,
            "deviation {last_phi} should exceed 0.5 rad"
        );
    }

    #[test]
    fn overestimated_mu_drops_the_object() {
        // Object D with mu commanded from 0.85 instead of 0.72: the grasp
        // force is too low and the object slips out during the pivot.
        let body = SliderBody {
            mass: 0.45,
            cog_distance: 0.08,
            inertia: 0.0044,
        };
        let true_p = pads(0.72);
        let fn_cmd = 1.2 * body.mass * 9.81 / 0.85;
        let steps = 3000;
        let mut state = SliderState::at_rest(0.0);
        for i in 0..steps {
            let tilt = -1.2 * (i as f64 / (steps - 1) as f64).min(1.0);
            let att = GripperAttitude {
                tilt,
                in_plane: 1.0,
            };
            let (next, _) = step(&state, &att, fn_cmd, SIM_DT, &body, &true_p, 0.0).unwrap();
            state = next;
            if state.slipped_out {
                break;
            }
        }
        assert!(state.slipped_out);
    }

    #[test]
    fn correct_mu_survives_the_same_pivot() {
        let body = SliderBody {
            mass: 0.45,
            cog_distance: 0.08,
            inertia: 0.0044,
        };
        let true_p = pads(0.72);
        let fn_cmd = 1.2 * body.mass * 9.81 / 0.72;
        let steps = 3000;
        let mut state = SliderState::at_rest(0.0);
        for i in 0..steps {
            let tilt = -1.2 * (i as f64 / (steps - 1) as f64).min(1.0);
            let att = GripperAttitude {
                tilt,
                in_plane: 1.0,
            };
            let (next, _) = step(&state, &att, fn_cmd, SIM_DT, &body, &true_p, 0.0).unwrap();
            state = next;
        }
        assert!(!state.slipped_out);
    }

    #[test]
    fn energy_dissipates_under_friction() {
        let body = body_e();
        let p = pads(0.8);
        let fnf = 2.0;
        let mut state = SliderState::at_rest(0.9);
        let g = 9.81;
        let energy = |s: &SliderState| {
            0.5 * body.inertia * s.theta_dot * s.theta_dot
                - body.mass * g * body.cog_distance * libm::cos(s.theta)
        };
        let mut prev_e = energy(&state);
        for _ in 0..5000 {
            let (next, _) = step(&state, &level(), fnf, SIM_DT, &body, &p, 0.0).unwrap();
            state = SliderState {
                slipped_out: false,
                ..next
            };
            let e = energy(&state);
            assert!(e <= prev_e + 1e-9);
            prev_e = e;
        }
    }

    #[test]
    fn equilibrium_attraction_within_five_seconds() {
        // A light object grasped far from its CoG converges close to
        // vertical at the gripper-pivoting force with a stationary gripper.
        let body = SliderBody {
            mass: 0.1,
            cog_distance: 0.19,
            inertia: 0.0039,
        };
        let mu = 1.0;
        let p = pads(mu);
        let fn_gp = 1.2 * body.mass * 9.81 / mu;
        for &phi0 in &[-1.4, -0.7, 0.4, 1.2] {
            let mut state = SliderState::at_rest(phi0);
            for _ in 0..2500 {
                let (next, _) = step(&state, &level(), fn_gp, SIM_DT, &body, &p, 0.0).unwrap();
                state = next;
            }
            assert!(!state.slipped_out);
            assert!(
                state.theta.abs() < 0.05,
                "phi0 {phi0} rested at {}",
                state.theta
            );
        }
    }

    #[test]
    fn rollouts_are_deterministic() {
        let body = body_e();
        let p = pads(0.8);
        let n = 1500;
        let attitude: Vec<GripperAttitude> = (0..n)
            .map(|i| GripperAttitude {
                tilt: 0.7 * libm::sin(i as f64 * SIM_DT),
                in_plane: 1.0,
            })
            .collect();
        let input = PivotSimInput {
            attitude_trace: attitude,
            fn_trace: vec![4.0; n],
            inertial_ft_trace: None,
            body,
            true_params: p,
            initial: SliderState::at_rest(0.02),
        };
        let (ra, sa) = simulate_pivot(&input).unwrap();
        let (rb, sb) = simulate_pivot(&input).unwrap();
        assert_eq!(sa.final_deviation.to_bits(), sb.final_deviation.to_bits());
        for (a, b) in ra.iter().zip(rb.iter()) {
            assert_eq!(a.state.theta.to_bits(), b.state.theta.to_bits());
        }
        assert_eq!(sa.slipped_out, sb.slipped_out);
    }

    #[test]
    fn more_grip_never_causes_slip() {
        let body = SliderBody {
            mass: 0.45,
            cog_distance: 0.08,
            inertia: 0.0044,
        };
        let true_p = pads(0.72);
        let n = 2500;
        let attitude: Vec<GripperAttitude> = (0..n)
            .map(|i| GripperAttitude {
                tilt: -1.2 * (i as f64 / (n - 1) as f64),
                in_plane: 1.0,
            })
            .collect();
        let run = |fnf: f64| {
            let input = PivotSimInput {
                attitude_trace: attitude.clone(),
                fn_trace: vec![fnf; n],
                inertial_ft_trace: None,
                body,
                true_params: true_p,
                initial: SliderState::at_rest(0.0),
            };
            simulate_pivot(&input).unwrap().1.slipped_out
        };
        let base = 1.2 * body.mass * 9.81 / 0.72;
        let mut previous_slipped = true;
        for k in 0..6 {
            let slipped = run(base * (0.8 + 0.15 * k as f64));
            // Once a force level survives, every higher level survives too.
            if !previous_slipped {
                assert!(!slipped);
            }
            previous_slipped = slipped;
        }
        assert!(!run(base));
    }
}
