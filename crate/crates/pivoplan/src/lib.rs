//! Experiment harness for the pivoting-aware manipulation planner: scene
//! files, simulated execution, feasibility studies and report generation.

pub mod exec;
pub mod experiments;
pub mod report;
pub mod scene_file;

pub use scene_file::{load_scene, SceneFileError};
