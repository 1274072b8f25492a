//! Core algorithms for pivoting-aware mobile manipulation.
//!
//! The crate is split along the data flow of a pick-and-place task:
//!
//! * [`kinematics`] — serial-chain model of the planar base + arm, forward
//!   kinematics, Jacobians and the virtual pivot joint that models in-hand
//!   rotation of a grasped object.
//! * [`scene`] — box obstacles, grasped-object models and signed-distance
//!   queries used for collision avoidance.
//! * [`qp`] — dense active-set solver for the per-step velocity program.
//! * [`planner`] — constraint assembly and the greedy velocity-level planner
//!   that produces timed whole-body trajectories.
//! * [`grasp`] — limit-surface grasp-force laws (slipping avoidance and
//!   gripper pivoting) plus the wrench-rate dynamic term.
//! * [`slider`] — friction-damped pendulum simulation of the grasped object,
//!   a hardware-free stand-in for the sensorized gripper experiments.
//! * [`switch`] — post-processing of trajectories into timestamped
//!   slipping-avoidance / gripper-pivoting activation schedules.
//!
//! Everything here is `no_std` (with `alloc`); file formats, CSV output and
//! the experiment CLI live in the companion `pivoplan` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod grasp;
pub mod kinematics;
pub mod planner;
pub mod qp;
pub mod scene;
pub mod slider;
pub mod switch;

pub use kinematics::{Configuration, JointKind, JointSpec, KinematicModel, LinkGeometry, Sphere};
pub use planner::{AngleSpec, PlanOutcome, PlanRequest, PlanResult, Trajectory};
pub use scene::{BoxObstacle, DistanceResult, ObjectModel, SceneDescription};
