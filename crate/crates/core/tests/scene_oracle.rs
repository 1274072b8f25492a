//! Sampling oracle and invariance properties for the distance queries.

use nalgebra::{Isometry3, Point3, Vector3};
use pivoplan_core::scene::{sphere_box_distance, sphere_sphere_distance, BoxObstacle};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Nearest distance from a point to the box surface by three-stage grid
/// refinement over each face; independent of the clamp-based formula.
fn surface_distance_oracle(p_local: Point3<f64>, he: Vector3<f64>) -> f64 {
    let faces: [(usize, f64, usize, usize); 6] = [
        (0, he.x, 1, 2),
        (0, -he.x, 1, 2),
        (1, he.y, 0, 2),
        (1, -he.y, 0, 2),
        (2, he.z, 0, 1),
        (2, -he.z, 0, 1),
    ];
    let dims = [he.x, he.y, he.z];
    let mut best = f64::INFINITY;
    for &(axis, level, u_axis, v_axis) in &faces {
        let (mut u_lo, mut u_hi) = (-dims[u_axis], dims[u_axis]);
        let (mut v_lo, mut v_hi) = (-dims[v_axis], dims[v_axis]);
        let mut face_best = f64::INFINITY;
        for _stage in 0..3 {
            let mut best_uv = (u_lo, v_lo);
            let n = 21;
            for iu in 0..n {
                for iv in 0..n {
                    let u = u_lo + (u_hi - u_lo) * iu as f64 / (n - 1) as f64;
                    let v = v_lo + (v_hi - v_lo) * iv as f64 / (n - 1) as f64;
                    let mut q = [0.0f64; 3];
                    q[axis] = level;
                    q[u_axis] = u;
                    q[v_axis] = v;
                    let d = ((p_local.x - q[0]).powi(2)
                        + (p_local.y - q[1]).powi(2)
                        + (p_local.z - q[2]).powi(2))
                    .sqrt();
                    if d < face_best {
                        face_best = d;
                        best_uv = (u, v);
                    }
                }
            }
            let du = (u_hi - u_lo) / (n - 1) as f64;
            let dv = (v_hi - v_lo) / (n - 1) as f64;
            u_lo = (best_uv.0 - du).max(-dims[u_axis]);
            u_hi = (best_uv.0 + du).min(dims[u_axis]);
            v_lo = (best_uv.1 - dv).max(-dims[v_axis]);
            v_hi = (best_uv.1 + dv).min(dims[v_axis]);
        }
        best = best.min(face_best);
    }
    best
}

#[test]
fn analytic_distance_agrees_with_dense_sampling_on_1000_pairs() {
    let mut rng = StdRng::seed_from_u64(99);
    for case in 0..1000 {
        let he = Vector3::new(
            rng.random_range(0.05..0.6),
            rng.random_range(0.05..0.6),
            rng.random_range(0.05..0.6),
        );
        let pose = Isometry3::new(
            Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ),
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
        );
        let bx = BoxObstacle::new("b", pose, he).unwrap();
        let center = Point3::new(
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        );
        let radius = rng.random_range(0.0..0.3);
        let analytic = sphere_box_distance(center, radius, &bx).distance;

        let local = bx.pose.inverse_transform_point(&center);
        let inside =
            local.x.abs() <= he.x && local.y.abs() <= he.y && local.z.abs() <= he.z;
        let surface = surface_distance_oracle(local, he);
        let oracle = if inside {
            -surface - radius
        } else {
            surface - radius
        };
        assert!(
            (analytic - oracle).abs() < 2e-3,
            "case {case}: analytic {analytic} vs sampled {oracle}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Translating both bodies by one rigid motion leaves the distance
    /// invariant.
    #[test]
    fn distance_invariant_under_common_rigid_motion(
        cx in -1.0f64..1.0, cy in -1.0f64..1.0, cz in -1.0f64..1.0,
        r in 0.01f64..0.2,
        hx in 0.05f64..0.5, hy in 0.05f64..0.5, hz in 0.05f64..0.5,
        tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
    ) {
        let bx = BoxObstacle::new("b", Isometry3::identity(), Vector3::new(hx, hy, hz)).unwrap();
        let center = Point3::new(cx, cy, cz);
        let base = sphere_box_distance(center, r, &bx).distance;

        let motion = Isometry3::new(Vector3::new(tx, ty, tz), Vector3::new(ax, ay, az));
        let moved_box = BoxObstacle::new("b", motion, Vector3::new(hx, hy, hz)).unwrap();
        let moved_center = motion.transform_point(&center);
        let moved = sphere_box_distance(moved_center, r, &moved_box).distance;
        prop_assert!((base - moved).abs() < 1e-9);
    }

    /// Swapping the sphere pair preserves distance and negates the normal.
    #[test]
    fn sphere_pair_swap_symmetry(
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
        bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0,
        ra in 0.01f64..0.3, rb in 0.01f64..0.3,
    ) {
        let a = Point3::new(ax, ay, az);
        let b = Point3::new(bx, by, bz);
        prop_assume!((a - b).norm() > 1e-6);
        let ab = sphere_sphere_distance(a, ra, b, rb);
        let ba = sphere_sphere_distance(b, rb, a, ra);
        prop_assert!((ab.distance - ba.distance).abs() < 1e-12);
        prop_assert!((ab.normal.as_ref() + ba.normal.as_ref()).norm() < 1e-12);
    }

    /// Witness points realize non-negative distances.
    #[test]
    fn witnesses_realize_distance(
        cx in -2.0f64..2.0, cy in -2.0f64..2.0, cz in 0.7f64..2.5,
        r in 0.01f64..0.2,
    ) {
        let bx = BoxObstacle::new(
            "b",
            Isometry3::identity(),
            Vector3::new(0.4, 0.5, 0.6),
        )
        .unwrap();
        let res = sphere_box_distance(Point3::new(cx, cy, cz), r, &bx);
        if res.distance >= 0.0 {
            prop_assert!(((res.witness_a - res.witness_b).norm() - res.distance).abs() < 1e-6);
        }
        prop_assert!((res.normal.norm() - 1.0).abs() < 1e-9);
    }
}
