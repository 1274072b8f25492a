//! Independent numerical oracles for the kinematics module: forward
//! kinematics against a straight-line homogeneous-matrix product, and
//! Jacobians against central finite differences.

use nalgebra::{Isometry3, Point3, Vector3};
use pivoplan_core::kinematics::{
    Configuration, JointKind, JointSpec, KinematicModel, LinkGeometry,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn rand_model(rng: &mut StdRng) -> KinematicModel {
    // Planar base plus a handful of randomly oriented arm joints, the same
    // shape the planner uses.
    let mut joints = vec![
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
    ];
    for i in 0..6 {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let origin = Isometry3::new(
            Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.05..0.4),
            ),
            Vector3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
            ),
        );
        joints.push(
            JointSpec::new(
                format!("arm_{i}"),
                JointKind::Rotational,
                axis,
                origin,
                Some((-2.8, 2.8)),
                1.5,
            )
            .unwrap(),
        );
    }
    let links = (0..joints.len())
        .map(|i| LinkGeometry {
            name: format!("link_{i}"),
            spheres: Vec::new(),
        })
        .collect();
    KinematicModel::new(joints, links).unwrap()
}

fn rand_config(rng: &mut StdRng, dof: usize) -> Configuration {
    Configuration::from_slice(
        &(0..dof)
            .map(|_| rng.random_range(-1.5..1.5))
            .collect::<Vec<f64>>(),
    )
}

/// 4x4 homogeneous matrices multiplied the pedestrian way.
mod mat4 {
    pub type M = [[f64; 4]; 4];

    pub fn identity() -> M {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    pub fn mul(a: &M, b: &M) -> M {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    pub fn translation(v: [f64; 3]) -> M {
        let mut m = identity();
        m[0][3] = v[0];
        m[1][3] = v[1];
        m[2][3] = v[2];
        m
    }

    /// Rodrigues rotation about a unit axis.
    pub fn rotation(axis: [f64; 3], angle: f64) -> M {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (axis[0], axis[1], axis[2]);
        let mut m = identity();
        m[0][0] = t * x * x + c;
        m[0][1] = t * x * y - s * z;
        m[0][2] = t * x * z + s * y;
        m[1][0] = t * x * y + s * z;
        m[1][1] = t * y * y + c;
        m[1][2] = t * y * z - s * x;
        m[2][0] = t * x * z - s * y;
        m[2][1] = t * y * z + s * x;
        m[2][2] = t * z * z + c;
        m
    }
}

fn oracle_fk(model: &KinematicModel, q: &Configuration, link: usize) -> mat4::M {
    let mut t = mat4::identity();
    for (i, joint) in model.joints().iter().take(link + 1).enumerate() {
        let tr = joint.origin.translation.vector;
        let rot = joint.origin.rotation;
        let axis_angle = rot.scaled_axis();
        let angle = axis_angle.norm();
        let origin_rot = if angle > 1e-12 {
            mat4::rotation(
                [
                    axis_angle[0] / angle,
                    axis_angle[1] / angle,
                    axis_angle[2] / angle,
                ],
                angle,
            )
        } else {
            mat4::identity()
        };
        t = mat4::mul(&t, &mat4::translation([tr[0], tr[1], tr[2]]));
        t = mat4::mul(&t, &origin_rot);
        let axis = [joint.axis[0], joint.axis[1], joint.axis[2]];
        let motion = match joint.kind {
            JointKind::Translational => mat4::translation([
                axis[0] * q.values[i],
                axis[1] * q.values[i],
                axis[2] * q.values[i],
            ]),
            _ => mat4::rotation(axis, q.values[i]),
        };
        t = mat4::mul(&t, &motion);
    }
    t
}

#[test]
fn forward_kinematics_matches_homogeneous_matrix_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let model = rand_model(&mut rng);
        let q = rand_config(&mut rng, model.dof());
        let frames = model.frames(&q).unwrap();
        for link in 0..model.dof() {
            let oracle = oracle_fk(&model, &q, link);
            let ours = frames[link];
            let rot = ours.rotation.to_rotation_matrix();
            for r in 0..3 {
                for c in 0..3 {
                    assert!(
                        (oracle[r][c] - rot[(r, c)]).abs() < 1e-9,
                        "rotation mismatch at link {link} ({r},{c})"
                    );
                }
                assert!(
                    (oracle[r][3] - ours.translation.vector[r]).abs() < 1e-9,
                    "translation mismatch at link {link}"
                );
            }
        }
    }
}

#[test]
fn jacobian_matches_finite_differences_on_100_random_configurations() {
    let mut rng = StdRng::seed_from_u64(7);
    let model = rand_model(&mut rng);
    let dof = model.dof();
    let h = 1e-6;
    for _ in 0..100 {
        let q = rand_config(&mut rng, dof);
        let link = rng.random_range(0..dof);
        let local = Point3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        );
        let frames = model.frames(&q).unwrap();
        let point_world = frames[link].transform_point(&local);
        let jac = model.jacobian(&q, link, point_world).unwrap();
        for j in 0..dof {
            let mut qp = q.clone();
            qp.values[j] += h;
            let mut qm = q.clone();
            qm.values[j] -= h;
            let fp = model.frames(&qp).unwrap()[link];
            let fm = model.frames(&qm).unwrap()[link];
            // Linear rate of the attached material point.
            let vp = fp.transform_point(&local);
            let vm = fm.transform_point(&local);
            for axis in 0..3 {
                let fd = (vp[axis] - vm[axis]) / (2.0 * h);
                assert!(
                    (jac[(axis, j)] - fd).abs() < 1e-5,
                    "linear column {j} axis {axis}: {} vs {}",
                    jac[(axis, j)],
                    fd
                );
            }
            // Angular rate from the relative rotation.
            let omega = (fp.rotation * fm.rotation.inverse()).scaled_axis() / (2.0 * h);
            for axis in 0..3 {
                assert!(
                    (jac[(axis + 3, j)] - omega[axis]).abs() < 1e-5,
                    "angular column {j} axis {axis}"
                );
            }
        }
    }
}

#[test]
fn chain_prefix_composition_is_consistent() {
    // FK of a link equals FK of any earlier link composed with the relative
    // transform of the remaining sub-chain.
    let mut rng = StdRng::seed_from_u64(23);
    let model = rand_model(&mut rng);
    let q = rand_config(&mut rng, model.dof());
    let frames = model.frames(&q).unwrap();
    for split in 0..model.dof() - 1 {
        let mut rel = Isometry3::identity();
        for (i, joint) in model
            .joints()
            .iter()
            .enumerate()
            .skip(split + 1)
            .take(model.dof() - split - 1)
        {
            rel *= joint.transform(q.values[i]);
        }
        let composed = frames[split] * rel;
        let direct = frames[model.dof() - 1];
        assert!((composed.translation.vector - direct.translation.vector).norm() < 1e-9);
        assert!(composed.rotation.angle_to(&direct.rotation) < 1e-9);
    }
}
