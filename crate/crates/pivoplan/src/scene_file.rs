//! TOML scene files: world boxes, graspable objects and the robot chain.
//!
//! Lengths are meters, angles radians, masses kilograms. Poses are given as
//! `{ xyz = [...], rpy = [...] }` with roll-pitch-yaw angles applied in
//! x-y-z order.

use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use pivoplan_core::kinematics::{
    capsule_spheres, Configuration, JointKind, JointSpec, KinematicModel, LinkGeometry, Sphere,
};
use pivoplan_core::scene::{BoxObstacle, ObjectModel, SceneDescription};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    gravity: [f64; 3],
    robot: RobotFile,
    #[serde(default)]
    obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    objects: Vec<ObjectFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    home: Vec<f64>,
    tool_offset: PoseFile,
    joints: Vec<JointFile>,
    #[serde(default)]
    links: Vec<LinkFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    name: String,
    kind: String,
    axis: [f64; 3],
    #[serde(default)]
    origin: Option<PoseFile>,
    #[serde(default)]
    limits: Option<[f64; 2]>,
    velocity_limit: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    joint: String,
    #[serde(default)]
    spheres: Vec<SphereFile>,
    #[serde(default)]
    capsules: Vec<CapsuleFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereFile {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsuleFile {
    from: [f64; 3],
    to: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    name: String,
    pose: PoseFile,
    half_extents: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    name: String,
    half_extents: [f64; 3],
    center_offset: [f64; 3],
    mass: f64,
    cog_offset: [f64; 3],
    mu: f64,
    inertia: f64,
    start_pose: PoseFile,
}

fn pose(p: &PoseFile) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(p.xyz[0], p.xyz[1], p.xyz[2]),
        UnitQuaternion::from_euler_angles(p.rpy[0], p.rpy[1], p.rpy[2]),
    )
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Load and fully validate a scene.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDescription, SceneFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SceneFile = toml::from_str(&text).map_err(|source| SceneFileError::Parse {
        path: path.display().to_string(),
        source: Box::new(source),
    })?;
    build_scene(file)
}

fn build_scene(file: SceneFile) -> Result<SceneDescription, SceneFileError> {
    let mut joints = Vec::new();
    for j in &file.robot.joints {
        let kind = match j.kind.as_str() {
            "translational" => JointKind::Translational,
            "rotational" => JointKind::Rotational,
            "continuous" => JointKind::ContinuousRotational,
            other => {
                return Err(SceneFileError::Invalid(format!(
                    "joint {}: unknown kind {other}",
                    j.name
                )))
            }
        };
        let origin = j.origin.as_ref().map(pose).unwrap_or_else(Isometry3::identity);
        let limits = j.limits.map(|l| (l[0], l[1]));
        joints.push(
            JointSpec::new(&j.name, kind, vec3(j.axis), origin, limits, j.velocity_limit)
                .map_err(|e| SceneFileError::Invalid(e.to_string()))?,
        );
    }

    let mut links: Vec<LinkGeometry> = joints
        .iter()
        .map(|j| LinkGeometry {
            name: format!("{}_link", j.name),
            spheres: Vec::new(),
        })
        .collect();
    for link in &file.robot.links {
        let idx = joints
            .iter()
            .position(|j| j.name == link.joint)
            .ok_or_else(|| {
                SceneFileError::Invalid(format!("link references unknown joint {}", link.joint))
            })?;
        for s in &link.spheres {
            links[idx]
                .spheres
                .push(Sphere::new(Point3::from(vec3(s.center)), s.radius));
        }
        for c in &link.capsules {
            links[idx].spheres.extend(capsule_spheres(
                Point3::from(vec3(c.from)),
                Point3::from(vec3(c.to)),
                c.radius,
                3,
            ));
        }
    }

    let robot = KinematicModel::new(joints, links)
        .map_err(|e| SceneFileError::Invalid(e.to_string()))?;

    let mut obstacles = Vec::new();
    for o in &file.obstacles {
        obstacles.push(
            BoxObstacle::new(&o.name, pose(&o.pose), vec3(o.half_extents))
                .map_err(|e| SceneFileError::Invalid(e.to_string()))?,
        );
    }

    let objects = file
        .objects
        .iter()
        .map(|o| ObjectModel {
            name: o.name.clone(),
            half_extents: vec3(o.half_extents),
            center_offset: vec3(o.center_offset),
            mass: o.mass,
            cog_offset: vec3(o.cog_offset),
            mu: o.mu,
            inertia_about_pivot: o.inertia,
            start_pose: pose(&o.start_pose),
        })
        .collect();

    let scene = SceneDescription {
        obstacles,
        objects,
        robot,
        robot_home: Configuration::from_slice(&file.robot.home),
        tool_offset: pose(&file.robot.tool_offset),
        gravity: vec3(file.gravity),
    };
    scene
        .validate()
        .map_err(|e| SceneFileError::Invalid(e.to_string()))?;
    Ok(scene)
}

/// Grasp-frame height of an object above its standing surface.
pub fn grasp_height(object: &ObjectModel) -> f64 {
    object.half_extents.z - object.center_offset.z
}

/// Replace the desk with one of height `h` (solid block, top face at `h`).
pub fn set_desk_height(scene: &mut SceneDescription, h: f64) {
    let desk = scene
        .obstacles
        .iter_mut()
        .find(|o| o.name == "desk")
        .expect("desk scene has a desk obstacle");
    let x = desk.pose.translation.x;
    let y = desk.pose.translation.y;
    let half_x = desk.half_extents.x;
    let half_y = desk.half_extents.y;
    desk.pose = Isometry3::translation(x, y, h / 2.0);
    desk.half_extents = Vector3::new(half_x, half_y, h / 2.0);
}

/// Rebuild the shelf layers at the given top-face heights, keeping the
/// plinth and panels.
pub fn set_shelf_layers(scene: &mut SceneDescription, heights: &[f64]) {
    scene.obstacles.retain(|o| !o.name.starts_with("shelf_layer"));
    let (x, y, half_x, half_y) = {
        let plinth = scene
            .obstacles
            .iter()
            .find(|o| o.name == "shelf_plinth")
            .expect("shelf scene has a plinth");
        (
            plinth.pose.translation.x,
            plinth.pose.translation.y,
            plinth.half_extents.x,
            plinth.half_extents.y,
        )
    };
    for &h in heights {
        let half_z = 0.012;
        scene.obstacles.push(
            BoxObstacle::new(
                format!("shelf_layer_{:03}", (h * 100.0).round() as i64),
                Isometry3::translation(x, y, h - half_z),
                Vector3::new(half_x, half_y, half_z),
            )
            .expect("valid layer box"),
        );
    }
}

/// World grasp-frame pose for placing `object` upright on a surface whose
/// top face is at `surface_z`, at `(x, y)`, hovering `hover` above contact.
pub fn place_pose(object: &ObjectModel, x: f64, y: f64, surface_z: f64, hover: f64) -> Isometry3<f64> {
    Isometry3::translation(x, y, surface_z + grasp_height(object) + hover)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenes_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenes")
            .canonicalize()
            .unwrap()
    }

    #[test]
    fn desk_scene_loads_and_validates() {
        let scene = load_scene(scenes_dir().join("desk.toml")).unwrap();
        assert_eq!(scene.robot.dof(), 9);
        assert!(scene.object("E").is_some());
        assert!(scene.obstacle("desk").is_some());
        assert!(scene.obstacle("floor").is_some());
    }

    #[test]
    fn shelf_scene_has_four_layers() {
        let scene = load_scene(scenes_dir().join("shelf.toml")).unwrap();
        let layers: Vec<&str> = scene
            .obstacles
            .iter()
            .filter(|o| o.name.starts_with("shelf_layer"))
            .map(|o| o.name.as_str())
            .collect();
        assert_eq!(layers.len(), 4);
        for h in [0.2, 0.6, 0.93, 1.31] {
            let name = format!("shelf_layer_{:03}", (h * 100.0f64).round() as i64);
            let layer = scene.obstacle(&name).unwrap();
            let top = layer.pose.translation.z + layer.half_extents.z;
            assert!((top - h).abs() < 1e-9, "layer {name} top at {top}");
        }
        for name in ["A", "B", "C", "D"] {
            assert!(scene.object(name).is_some());
        }
    }

    #[test]
    fn desk_height_override_moves_the_top_face() {
        let mut scene = load_scene(scenes_dir().join("desk.toml")).unwrap();
        set_desk_height(&mut scene, 1.31);
        let desk = scene.obstacle("desk").unwrap();
        assert!((desk.pose.translation.z + desk.half_extents.z - 1.31).abs() < 1e-9);
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "gravity = \"sideways\"").unwrap();
        assert!(matches!(
            load_scene(&path),
            Err(SceneFileError::Parse { .. })
        ));
    }

    #[test]
    fn degenerate_box_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.toml");
        let desk = std::fs::read_to_string(scenes_dir().join("desk.toml")).unwrap();
        let broken = desk.replace(
            "name = \"desk\"",
            "name = \"desk\"\n# zeroed below",
        );
        // Append a degenerate obstacle instead of editing in place.
        let broken = format!(
            "{broken}\n[[obstacles]]\nname = \"flat\"\npose = {{ xyz = [0,0,0], rpy = [0,0,0] }}\nhalf_extents = [0.1, 0.0, 0.1]\n"
        );
        std::fs::write(&path, broken).unwrap();
        match load_scene(&path) {
            Err(SceneFileError::Invalid(msg)) => assert!(msg.contains("flat")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
