//! Serial-chain kinematics of the mobile manipulator.
//!
//! The robot is a single chain: two prismatic base joints and a base yaw
//! joint (the planar base pose in the map frame), six arm joints, and an
//! optional *virtual pivot joint* between the fingertips and the grasped
//! object. Link `i` is the frame reached after applying joint `i`; each
//! joint's parent is the previous link, so the chain ordering invariant is
//! satisfied by construction.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DVector, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

/// How a joint moves its child frame relative to its origin frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    /// Prismatic motion along `axis` (meters).
    Translational,
    /// Revolute motion about `axis` with position limits (radians).
    Rotational,
    /// Revolute motion about `axis` without position limits. Angles are
    /// never wrapped, so finite-difference velocities stay well defined.
    ContinuousRotational,
}

/// One joint of the chain.
#[derive(Clone, Debug)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis expressed in the frame after `origin`.
    pub axis: Unit<Vector3<f64>>,
    /// Rigid transform from the parent link frame to the joint frame.
    pub origin: Isometry3<f64>,
    /// `[lower, upper]` position bounds; `None` for unlimited joints.
    pub limits: Option<(f64, f64)>,
    /// Magnitude bound on the joint rate (rad/s or m/s).
    pub velocity_limit: f64,
}

impl JointSpec {
    pub fn new(
        name: impl Into<String>,
        kind: JointKind,
        axis: Vector3<f64>,
        origin: Isometry3<f64>,
        limits: Option<(f64, f64)>,
        velocity_limit: f64,
    ) -> Result<Self, KinematicsError> {
        let name = name.into();
        if (axis.norm() - 1.0).abs() > 1e-9 {
            return Err(KinematicsError::NonUnitAxis { joint: name });
        }
        if kind == JointKind::ContinuousRotational && limits.is_some() {
            return Err(KinematicsError::LimitsOnContinuousJoint { joint: name });
        }
        if let Some((lo, hi)) = limits {
            if !(lo < hi) {
                return Err(KinematicsError::EmptyLimitRange { joint: name });
            }
        }
        if !(velocity_limit >= 0.0) {
            return Err(KinematicsError::NegativeVelocityLimit { joint: name });
        }
        Ok(Self {
            name,
            kind,
            axis: Unit::new_unchecked(axis),
            origin,
            limits,
            velocity_limit,
        })
    }

    /// Transform from the parent link frame to the child link frame at
    /// joint position `q`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        self.origin * self.motion(q)
    }

    fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Translational => {
                Isometry3::from_parts(Translation3::from(self.axis.as_ref() * q), UnitQuaternion::identity())
            }
            JointKind::Rotational | JointKind::ContinuousRotational => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
        }
    }
}

/// Collision sphere attached to a link, center in the link frame.
#[derive(Clone, Copy, Debug)]
pub struct Sphere {
    pub center: Point3<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point3<f64>, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Expand a capsule into `n` spheres along its segment. Three samples keep
/// every distance query closed-form while staying close to the swept shape.
pub fn capsule_spheres(p0: Point3<f64>, p1: Point3<f64>, radius: f64, n: usize) -> Vec<Sphere> {
    let n = n.max(1);
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            Sphere::new(p0 + (p1 - p0) * t, radius)
        })
        .collect()
}

/// Collision geometry of one link.
#[derive(Clone, Debug, Default)]
pub struct LinkGeometry {
    pub name: String,
    pub spheres: Vec<Sphere>,
}

/// The whole-body chain. Immutable after construction; forward kinematics
/// and Jacobian evaluation are pure, so one model can serve concurrent
/// planning requests.
#[derive(Clone, Debug)]
pub struct KinematicModel {
    joints: Vec<JointSpec>,
    /// One entry per joint: geometry of the link that follows it.
    links: Vec<LinkGeometry>,
    pivot_joint_index: Option<usize>,
    object_cog_offset: Vector3<f64>,
}

impl KinematicModel {
    /// Build a chain from joints and matching per-joint link geometry.
    pub fn new(joints: Vec<JointSpec>, links: Vec<LinkGeometry>) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::EmptyChain);
        }
        if links.len() != joints.len() {
            return Err(KinematicsError::LinkCountMismatch {
                joints: joints.len(),
                links: links.len(),
            });
        }
        Ok(Self {
            joints,
            links,
            pivot_joint_index: None,
            object_cog_offset: Vector3::zeros(),
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkGeometry] {
        &self.links
    }

    pub fn pivot_joint_index(&self) -> Option<usize> {
        self.pivot_joint_index
    }

    /// Grasp-point to center-of-gravity offset of the attached object,
    /// expressed in the object link frame. Zero when no pivot is attached.
    pub fn object_cog_offset(&self) -> Vector3<f64> {
        self.object_cog_offset
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Index of the link the grasp frame hangs off: the last link before the
    /// pivot joint, or the last link of the chain when no pivot is attached.
    pub fn tool_link_index(&self) -> usize {
        match self.pivot_joint_index {
            Some(p) => p - 1,
            None => self.joints.len() - 1,
        }
    }

    fn check_dim(&self, q: &Configuration) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// World transforms of every link frame, in chain order.
    pub fn frames(&self, q: &Configuration) -> Result<Vec<Isometry3<f64>>, KinematicsError> {
        self.check_dim(q)?;
        let mut frames = Vec::with_capacity(self.joints.len());
        let mut t = Isometry3::identity();
        for (joint, &qi) in self.joints.iter().zip(q.values.iter()) {
            t *= joint.transform(qi);
            frames.push(t);
        }
        Ok(frames)
    }

    /// World pose of a named link frame.
    pub fn forward_kinematics(
        &self,
        q: &Configuration,
        link: &str,
    ) -> Result<Isometry3<f64>, KinematicsError> {
        let index = self
            .link_index(link)
            .ok_or_else(|| KinematicsError::UnknownLink { link: link.into() })?;
        Ok(self.frames(q)?[index])
    }

    /// 6 x N spatial Jacobian of a world-frame `point` rigidly attached to
    /// `link`. Rows 0..3 are the linear velocity of the point, rows 3..6 the
    /// angular velocity of the link, per unit joint rate. Columns of joints
    /// that do not precede the link are zero.
    pub fn jacobian(
        &self,
        q: &Configuration,
        link: usize,
        point: Point3<f64>,
    ) -> Result<nalgebra::DMatrix<f64>, KinematicsError> {
        if link >= self.joints.len() {
            return Err(KinematicsError::UnknownLink {
                link: String::from("<index out of range>"),
            });
        }
        let frames = self.frames(q)?;
        let n = self.dof();
        let mut jac = nalgebra::DMatrix::<f64>::zeros(6, n);
        for i in 0..=link {
            // Axis and origin of joint i in world coordinates: the joint
            // frame is the parent link frame composed with the joint origin.
            let parent = if i == 0 {
                Isometry3::identity()
            } else {
                frames[i - 1]
            };
            let joint_frame = parent * self.joints[i].origin;
            let axis_w = joint_frame.rotation * self.joints[i].axis.as_ref();
            match self.joints[i].kind {
                JointKind::Translational => {
                    for r in 0..3 {
                        jac[(r, i)] = axis_w[r];
                    }
                }
                JointKind::Rotational | JointKind::ContinuousRotational => {
                    let origin = Point3::from(joint_frame.translation.vector);
                    let lin = axis_w.cross(&(point - origin));
                    for r in 0..3 {
                        jac[(r, i)] = lin[r];
                        jac[(r + 3, i)] = axis_w[r];
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Append the virtual continuous pivot joint between the fingertip link
    /// and the grasped object. `grasp_frame` is the grasp pose relative to
    /// the current last link; its y axis is the gripper closing axis (the
    /// line through both fingertip contact patches), which is the axis the
    /// object can rotate about. `object_spheres` become the collision
    /// geometry of the new object link, centers expressed in the grasp frame.
    pub fn attach_pivot(
        &self,
        grasp_frame: Isometry3<f64>,
        cog_offset: Vector3<f64>,
        object_spheres: Vec<Sphere>,
        object_link_name: impl Into<String>,
    ) -> Result<Self, KinematicsError> {
        if self.pivot_joint_index.is_some() {
            return Err(KinematicsError::PivotAlreadyAttached);
        }
        if cog_offset.norm() <= 1e-6 {
            // Gravitational torque about the pivot would vanish, so the
            // object could never swing into a new orientation.
            return Err(KinematicsError::ZeroCogOffset);
        }
        let mut model = self.clone();
        let pivot = JointSpec::new(
            "virtual_pivot",
            JointKind::ContinuousRotational,
            Vector3::y(),
            grasp_frame,
            None,
            PIVOT_VELOCITY_LIMIT,
        )?;
        model.joints.push(pivot);
        model.links.push(LinkGeometry {
            name: object_link_name.into(),
            spheres: object_spheres,
        });
        model.pivot_joint_index = Some(model.joints.len() - 1);
        model.object_cog_offset = cog_offset;
        Ok(model)
    }
}

/// Rate bound for the virtual joint; generous compared to the arm so the
/// planner, not this bound, shapes pivot motion.
pub const PIVOT_VELOCITY_LIMIT: f64 = 1.5;

/// Joint positions in chain order.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub values: DVector<f64>,
}

impl Configuration {
    pub fn new(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            values: DVector::from_row_slice(values),
        }
    }

    pub fn zeros(dof: usize) -> Self {
        Self {
            values: DVector::zeros(dof),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Clamp limited joints into their bounds.
    pub fn clamp_to_limits(&mut self, model: &KinematicModel) {
        for (i, joint) in model.joints().iter().enumerate() {
            if let Some((lo, hi)) = joint.limits {
                self.values[i] = self.values[i].clamp(lo, hi);
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum KinematicsError {
    #[error("chain must contain at least one joint")]
    EmptyChain,
    #[error("joint {joint}: axis must have unit norm")]
    NonUnitAxis { joint: String },
    #[error("joint {joint}: continuous joints cannot carry position limits")]
    LimitsOnContinuousJoint { joint: String },
    #[error("joint {joint}: lower limit must be below upper limit")]
    EmptyLimitRange { joint: String },
    #[error("joint {joint}: velocity limit must be non-negative")]
    NegativeVelocityLimit { joint: String },
    #[error("{joints} joints but {links} link geometries")]
    LinkCountMismatch { joints: usize, links: usize },
    #[error("unknown link {link}")]
    UnknownLink { link: String },
    #[error("configuration has {got} values, model has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("a pivot joint is already attached")]
    PivotAlreadyAttached,
    #[error("cannot pivot: grasp point coincides with the object CoG")]
    ZeroCogOffset,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn link(name: &str) -> LinkGeometry {
        LinkGeometry {
            name: name.into(),
            spheres: Vec::new(),
        }
    }

    /// Planar base (x, y, yaw) plus one vertical-offset rotational joint,
    /// enough to exercise every joint kind.
    fn test_model() -> KinematicModel {
        let joints = vec![
            JointSpec::new(
                "base_x",
                JointKind::Translational,
                Vector3::x(),
                Isometry3::identity(),
                None,
                0.5,
            )
            .unwrap(),
            JointSpec::new(
                "base_y",
                JointKind::Translational,
                Vector3::y(),
                Isometry3::identity(),
                None,
                0.5,
            )
            .unwrap(),
            JointSpec::new(
                "base_yaw",
                JointKind::ContinuousRotational,
                Vector3::z(),
                Isometry3::identity(),
                None,
                1.0,
            )
            .unwrap(),
            JointSpec::new(
                "shoulder",
                JointKind::Rotational,
                Vector3::y(),
                Isometry3::translation(0.2, 0.0, 0.8),
                Some((-2.5, 2.5)),
                1.5,
            )
            .unwrap(),
        ];
        let links = vec![link("base_x_l"), link("base_y_l"), link("base"), link("upper_arm")];
        KinematicModel::new(joints, links).unwrap()
    }

    #[test]
    fn zero_configuration_is_identity_at_base() {
        let model = test_model();
        let q = Configuration::zeros(4);
        let t = model.forward_kinematics(&q, "base").unwrap();
        assert_relative_eq!(t.translation.vector.norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(t.rotation.angle(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_base_translation() {
        let model = test_model();
        let q = Configuration::from_slice(&[1.0, 2.0, 0.0, 0.0]);
        let t = model.forward_kinematics(&q, "base").unwrap();
        assert_relative_eq!(t.translation.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.translation.y, 2.0, epsilon = 1e-12);
        assert_relative_eq!(t.rotation.angle(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prismatic_jacobian_column_is_axis() {
        let model = test_model();
        let q = Configuration::from_slice(&[0.3, -0.1, 0.7, 0.2]);
        let frames = model.frames(&q).unwrap();
        let p = Point3::from(frames[3].translation.vector);
        let jac = model.jacobian(&q, 3, p).unwrap();
        // base_x: linear column equals world x, no angular part.
        assert_relative_eq!(jac[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(jac.column(0).rows(1, 5).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn planar_rotation_jacobian_magnitude() {
        let model = test_model();
        // Base yaw rotating a point at distance r in the base plane.
        let q = Configuration::zeros(4);
        let r = 1.3;
        let p = Point3::new(r, 0.0, 0.0);
        let jac = model.jacobian(&q, 2, p).unwrap();
        let lin = jac.column(2).rows(0, 3).norm();
        assert_relative_eq!(lin, r, epsilon = 1e-12);
        assert_relative_eq!(jac[(5, 2)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(jac[(3, 2)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(jac[(4, 2)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn columns_beyond_link_are_zero() {
        let model = test_model();
        let q = Configuration::from_slice(&[0.1, 0.2, 0.3, 0.4]);
        let jac = model.jacobian(&q, 1, Point3::new(0.5, 0.5, 0.0)).unwrap();
        assert_relative_eq!(jac.column(2).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(jac.column(3).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn attach_pivot_adds_a_continuous_dof() {
        let model = test_model();
        assert_eq!(model.dof(), 4);
        let grasp = Isometry3::translation(0.0, 0.0, -0.2);
        let with_pivot = model
            .attach_pivot(grasp, Vector3::new(0.0, 0.0, -0.08), vec![], "object")
            .unwrap();
        assert_eq!(with_pivot.dof(), 5);
        let idx = with_pivot.pivot_joint_index().unwrap();
        let spec = &with_pivot.joints()[idx];
        assert_eq!(spec.kind, JointKind::ContinuousRotational);
        assert!(spec.limits.is_none());
    }

    #[test]
    fn attach_pivot_rejects_zero_cog_offset() {
        let model = test_model();
        let err = model
            .attach_pivot(Isometry3::identity(), Vector3::zeros(), vec![], "object")
            .unwrap_err();
        assert_eq!(err, KinematicsError::ZeroCogOffset);
    }

    #[test]
    fn attach_pivot_twice_fails() {
        let model = test_model();
        let once = model
            .attach_pivot(Isometry3::identity(), Vector3::new(0.0, 0.0, -0.1), vec![], "object")
            .unwrap();
        let err = once
            .attach_pivot(Isometry3::identity(), Vector3::new(0.0, 0.0, -0.1), vec![], "object")
            .unwrap_err();
        assert_eq!(err, KinematicsError::PivotAlreadyAttached);
    }

    #[test]
    fn continuous_joint_rejects_limits() {
        let err = JointSpec::new(
            "bad",
            JointKind::ContinuousRotational,
            Vector3::z(),
            Isometry3::identity(),
            Some((-1.0, 1.0)),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, KinematicsError::LimitsOnContinuousJoint { .. }));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = test_model();
        let q = Configuration::zeros(3);
        assert!(matches!(
            model.forward_kinematics(&q, "base"),
            Err(KinematicsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unknown_link_is_reported() {
        let model = test_model();
        let q = Configuration::zeros(4);
        assert!(matches!(
            model.forward_kinematics(&q, "nope"),
            Err(KinematicsError::UnknownLink { .. })
        ));
    }
}
