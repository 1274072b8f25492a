//! World model and signed-distance queries.
//!
//! Obstacles are oriented boxes (floor, desk, shelf layers and panels are
//! all box-representable); robot links and the grasped object are sphere
//! sets, so every query reduces to sphere-box or sphere-sphere distance and
//! stays closed-form with smooth gradients for the planner.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Isometry3, Point3, Unit, Vector3};
use thiserror::Error;

use crate::kinematics::{Configuration, KinematicModel, KinematicsError, Sphere};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Oriented box obstacle.
#[derive(Clone, Debug)]
pub struct BoxObstacle {
    pub name: String,
    pub pose: Isometry3<f64>,
    pub half_extents: Vector3<f64>,
}

impl BoxObstacle {
    pub fn new(
        name: impl Into<String>,
        pose: Isometry3<f64>,
        half_extents: Vector3<f64>,
    ) -> Result<Self, SceneError> {
        let name = name.into();
        if !(half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0) {
            return Err(SceneError::DegenerateBox { name });
        }
        Ok(Self {
            name,
            pose,
            half_extents,
        })
    }
}

/// Grasped-object model. The object frame has its origin at the grasp point
/// (between the fingertip contact patches) with y along the closing axis;
/// the box body sits at `center_offset` from there.
#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub name: String,
    pub half_extents: Vector3<f64>,
    /// Box center in the grasp frame.
    pub center_offset: Vector3<f64>,
    pub mass: f64,
    /// Grasp point to center of gravity, in the grasp frame.
    pub cog_offset: Vector3<f64>,
    /// Object/pad friction coefficient.
    pub mu: f64,
    /// Rotational inertia about the pivot axis through the grasp point.
    pub inertia_about_pivot: f64,
    /// Initial world pose of the grasp frame (object standing in the scene).
    pub start_pose: Isometry3<f64>,
}

impl ObjectModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.mass > 0.0) {
            return Err(SceneError::InvalidObject {
                name: self.name.clone(),
                what: "mass must be positive",
            });
        }
        if !(self.mu > 0.0) {
            return Err(SceneError::InvalidObject {
                name: self.name.clone(),
                what: "friction coefficient must be positive",
            });
        }
        if !(self.inertia_about_pivot > 0.0) {
            return Err(SceneError::InvalidObject {
                name: self.name.clone(),
                what: "inertia must be positive",
            });
        }
        if !(self.half_extents.x > 0.0 && self.half_extents.y > 0.0 && self.half_extents.z > 0.0) {
            return Err(SceneError::InvalidObject {
                name: self.name.clone(),
                what: "half extents must be positive",
            });
        }
        Ok(())
    }

    /// Bounding sphere set of the box body: three spheres along its longest
    /// axis, radius covering the orthogonal cross section.
    pub fn bounding_spheres(&self) -> Vec<Sphere> {
        let he = self.half_extents;
        let (axis, long, a, b) = if he.x >= he.y && he.x >= he.z {
            (Vector3::x(), he.x, he.y, he.z)
        } else if he.y >= he.z {
            (Vector3::y(), he.y, he.x, he.z)
        } else {
            (Vector3::z(), he.z, he.x, he.y)
        };
        let radius = libm::hypot(a, b).max(0.015);
        let reach = (long - radius.min(long)).max(0.0);
        [-1.0f64, 0.0, 1.0]
            .iter()
            .map(|&s| Sphere::new(Point3::from(self.center_offset + axis * (s * reach)), radius))
            .collect()
    }
}

/// Scene: obstacles, graspable objects, the robot chain and gravity.
#[derive(Clone, Debug)]
pub struct SceneDescription {
    pub obstacles: Vec<BoxObstacle>,
    pub objects: Vec<ObjectModel>,
    pub robot: KinematicModel,
    pub robot_home: Configuration,
    /// Grasp frame relative to the last arm link: origin between the
    /// fingertip contact patches, y along the closing axis, -z along the
    /// approach direction.
    pub tool_offset: Isometry3<f64>,
    pub gravity: Vector3<f64>,
}

impl SceneDescription {
    /// Check every scene invariant; errors name the offending entity.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut names: Vec<&str> = Vec::new();
        for o in &self.obstacles {
            if names.contains(&o.name.as_str()) {
                return Err(SceneError::DuplicateName {
                    name: o.name.clone(),
                });
            }
            names.push(&o.name);
        }
        for o in &self.objects {
            if names.contains(&o.name.as_str()) {
                return Err(SceneError::DuplicateName {
                    name: o.name.clone(),
                });
            }
            names.push(&o.name);
            o.validate()?;
        }
        let g = self.gravity.norm();
        if (g - STANDARD_GRAVITY).abs() > 0.05 * STANDARD_GRAVITY {
            return Err(SceneError::ImplausibleGravity { norm: g });
        }
        if self.robot_home.len() != self.robot.dof() {
            return Err(SceneError::Kinematics(KinematicsError::DimensionMismatch {
                expected: self.robot.dof(),
                got: self.robot_home.len(),
            }));
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Option<&ObjectModel> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn obstacle(&self, name: &str) -> Option<&BoxObstacle> {
        self.obstacles.iter().find(|o| o.name == name)
    }
}

/// Signed distance with witness points. `normal` points from body `b`
/// toward body `a`; for positive distances the witnesses realize it.
#[derive(Clone, Copy, Debug)]
pub struct DistanceResult {
    pub distance: f64,
    pub witness_a: Point3<f64>,
    pub witness_b: Point3<f64>,
    pub normal: Unit<Vector3<f64>>,
}

impl DistanceResult {
    /// Same pair reported from the other body's perspective: witnesses swap
    /// and the normal negates while the distance is preserved.
    pub fn flipped(self) -> Self {
        Self {
            distance: self.distance,
            witness_a: self.witness_b,
            witness_b: self.witness_a,
            normal: Unit::new_unchecked(-self.normal.as_ref()),
        }
    }
}

/// Exact signed distance between a sphere and an oriented box.
///
/// Negative distances mean the sphere surface penetrates the box; the
/// witnesses are then the deepest sphere point and its projection onto the
/// box surface.
pub fn sphere_box_distance(center: Point3<f64>, radius: f64, bx: &BoxObstacle) -> DistanceResult {
    debug_assert!(radius >= 0.0);
    let local = bx.pose.inverse_transform_point(&center);
    let he = bx.half_extents;
    let clamped = Point3::new(
        local.x.clamp(-he.x, he.x),
        local.y.clamp(-he.y, he.y),
        local.z.clamp(-he.z, he.z),
    );
    let (surface_local, normal_local, center_dist) = if clamped != local {
        // Center outside the box: nearest surface point is the clamp.
        let delta = local - clamped;
        let d = delta.norm();
        (clamped, delta / d, d)
    } else {
        // Center inside: push out through the nearest face.
        let gaps = [
            (he.x - local.x, Vector3::x(), 0),
            (local.x + he.x, -Vector3::x(), 1),
            (he.y - local.y, Vector3::y(), 2),
            (local.y + he.y, -Vector3::y(), 3),
            (he.z - local.z, Vector3::z(), 4),
            (local.z + he.z, -Vector3::z(), 5),
        ];
        let &(gap, n, _) = gaps
            .iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap();
        (Point3::from(local.coords + n * gap), n, -gap)
    };
    let distance = center_dist - radius;
    let normal_world = Unit::new_normalize(bx.pose.rotation * normal_local);
    let witness_b = bx.pose.transform_point(&surface_local);
    let witness_a = center - normal_world.as_ref() * radius;
    DistanceResult {
        distance,
        witness_a,
        witness_b,
        normal: normal_world,
    }
}

/// Signed distance between two spheres; `normal` points from `b` to `a`.
pub fn sphere_sphere_distance(
    ca: Point3<f64>,
    ra: f64,
    cb: Point3<f64>,
    rb: f64,
) -> DistanceResult {
    let delta = ca - cb;
    let d = delta.norm();
    let normal = if d > 1e-12 {
        Unit::new_normalize(delta)
    } else {
        Unit::new_unchecked(Vector3::z())
    };
    DistanceResult {
        distance: d - ra - rb,
        witness_a: ca - normal.as_ref() * ra,
        witness_b: cb + normal.as_ref() * rb,
        normal,
    }
}

/// What a contact pair is made of; link geometry indices refer to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairBodies {
    /// Robot/object sphere against a static obstacle.
    LinkObstacle { link: usize, obstacle: usize },
    /// Self-collision pair between two non-adjacent links.
    LinkLink { link_a: usize, link_b: usize },
}

/// One proximity report from [`min_distance_robot_scene`].
#[derive(Clone, Copy, Debug)]
pub struct ContactPair {
    pub result: DistanceResult,
    pub bodies: PairBodies,
    /// Sphere center of body a in its link frame (the moving body).
    pub local_a: Point3<f64>,
    /// Sphere center of body b in its link frame for link-link pairs.
    pub local_b: Point3<f64>,
}

/// Default activation cutoff: pairs farther apart than this are dropped, so
/// the constraint count tracks how many objects are close to the robot.
pub const DISTANCE_CUTOFF: f64 = 0.3;

/// All proximity pairs closer than `cutoff`: every link/object sphere
/// against every obstacle, plus self-collision pairs of links more than one
/// joint apart (adjacent links are mechanically coupled and excluded).
pub fn min_distance_robot_scene(
    model: &KinematicModel,
    q: &Configuration,
    obstacles: &[BoxObstacle],
    cutoff: f64,
) -> Result<Vec<ContactPair>, KinematicsError> {
    let frames = model.frames(q)?;
    let links = model.links();
    let mut out = Vec::new();
    for (li, link) in links.iter().enumerate() {
        for s in &link.spheres {
            let cw = frames[li].transform_point(&s.center);
            for (oi, bx) in obstacles.iter().enumerate() {
                let res = sphere_box_distance(cw, s.radius, bx);
                if res.distance < cutoff {
                    out.push(ContactPair {
                        result: res,
                        bodies: PairBodies::LinkObstacle {
                            link: li,
                            obstacle: oi,
                        },
                        local_a: s.center,
                        local_b: Point3::origin(),
                    });
                }
            }
        }
    }
    for la in 0..links.len() {
        for lb in (la + 2)..links.len() {
            for sa in &links[la].spheres {
                for sb in &links[lb].spheres {
                    let ca = frames[la].transform_point(&sa.center);
                    let cb = frames[lb].transform_point(&sb.center);
                    let res = sphere_sphere_distance(cb, sb.radius, ca, sa.radius);
                    if res.distance < cutoff {
                        // Body a is the distal link so its Jacobian carries
                        // the richer motion.
                        out.push(ContactPair {
                            result: res,
                            bodies: PairBodies::LinkLink {
                                link_a: lb,
                                link_b: la,
                            },
                            local_a: sb.center,
                            local_b: sa.center,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Error)]
pub enum SceneError {
    #[error("obstacle {name}: half extents must be strictly positive")]
    DegenerateBox { name: String },
    #[error("duplicate entity name {name}")]
    DuplicateName { name: String },
    #[error("object {name}: {what}")]
    InvalidObject { name: String, what: &'static str },
    #[error("gravity norm {norm} is not within 5% of standard gravity")]
    ImplausibleGravity { norm: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
