use freehand_recon::geometry::{
    accumulate_trajectory, angle_diff, chain_poses, compose, compose_poses, euler_to_rotation, invert,
    invert_pose, matrix_to_pose, pose_to_matrix, rotation_to_euler, wrap_degrees, EulerAngles, Pose6,
};
use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -180.0..180.0f64
}

fn euler() -> impl Strategy<Value = EulerAngles> {
    (angle(), -89.5..89.5f64, angle()).prop_map(|(a, b, c)| EulerAngles::new(a, b, c))
}

fn any_euler() -> impl Strategy<Value = EulerAngles> {
    (angle(), -90.0..=90.0f64, angle()).prop_map(|(a, b, c)| EulerAngles::new(a, b, c))
}

fn pose() -> impl Strategy<Value = Pose6> {
    (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64, euler()).prop_map(|(tx, ty, tz, rotation)| Pose6 {
        tx,
        ty,
        tz,
        rotation,
    })
}

fn max_abs(m: &Matrix4<f64>) -> f64 {
    m.abs().max()
}

proptest! {
    #[test]
    fn rotation_is_orthonormal_with_unit_determinant(e in any_euler()) {
        let r = euler_to_rotation(e);
        prop_assert!(r.orthonormality_error() < 1e-12);
        prop_assert!((r.0.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_is_canonical_and_reconstructs(e in any_euler()) {
        let r = euler_to_rotation(e);
        let back = rotation_to_euler(&r);
        for a in [back.rx, back.rz] {
            prop_assert!(a > -180.0 && a <= 180.0);
        }
        prop_assert!(back.ry >= -90.0 && back.ry <= 90.0);
        prop_assert!((euler_to_rotation(back).0 - r.0).abs().max() < 1e-9);
    }

    #[test]
    fn euler_round_trip_off_the_singularity(e in euler()) {
        let back = rotation_to_euler(&euler_to_rotation(e));
        prop_assert!(angle_diff(back.rx, e.rx).abs() < 1e-9);
        prop_assert!((back.ry - e.ry).abs() < 1e-9);
        prop_assert!(angle_diff(back.rz, e.rz).abs() < 1e-9);
    }

    #[test]
    fn pose_round_trip(p in pose()) {
        let q = matrix_to_pose(&pose_to_matrix(&p));
        for (a, b) in p.to_array()[..3].iter().zip(&q.to_array()[..3]) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!(max_abs(&(pose_to_matrix(&q).0 - pose_to_matrix(&p).0)) < 1e-9);
    }

    #[test]
    fn inverse_cancels(p in pose()) {
        let t = pose_to_matrix(&p);
        prop_assert!(max_abs(&(compose(&t, &invert(&t)).0 - Matrix4::identity())) < 1e-9);
        let q = compose_poses(&p, &invert_pose(&p));
        for v in q.to_array() {
            prop_assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        let (ta, tb, tc) = (pose_to_matrix(&a), pose_to_matrix(&b), pose_to_matrix(&c));
        let left = compose(&compose(&ta, &tb), &tc);
        let right = compose(&ta, &compose(&tb, &tc));
        prop_assert!(max_abs(&(left.0 - right.0)) < 1e-9);
    }

    #[test]
    fn chain_matches_accumulated_trajectory(poses in prop::collection::vec(pose(), 1..12)) {
        let traj = accumulate_trajectory(&poses);
        prop_assert_eq!(traj.len(), poses.len() + 1);
        let end = pose_to_matrix(&chain_poses(&poses));
        prop_assert!((end.translation() - traj.positions[poses.len()]).norm() < 1e-9);
        prop_assert!((end.rotation().0 - traj.rotations[poses.len()].0).abs().max() < 1e-9);
    }

    #[test]
    fn rigid_motion_preserves_distances(p in pose(), a in prop::array::uniform3(-50.0..50.0f64), b in prop::array::uniform3(-50.0..50.0f64)) {
        let t = pose_to_matrix(&p);
        let (a, b) = (Vector3::from(a), Vector3::from(b));
        let d = (t.transform_point(&a) - t.transform_point(&b)).norm();
        prop_assert!((d - (a - b).norm()).abs() < 1e-9);
    }

    #[test]
    fn wrapping_is_idempotent_and_in_range(a in -1e4..1e4f64) {
        let w = wrap_degrees(a);
        prop_assert!(w > -180.0 && w <= 180.0);
        prop_assert_eq!(wrap_degrees(w), w);
        prop_assert!(angle_diff(w, a).abs() < 1e-9);
    }
}
