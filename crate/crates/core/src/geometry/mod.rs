//! Rigid-transform algebra for probe poses.
//!
//! Euler angles are in degrees and follow the intrinsic Z-Y-X convention:
//! `R = Rz(rz) * Ry(ry) * Rx(rx)`. The same convention is used by every
//! producer and consumer in the crate (simulator, IMU synthesis, estimator,
//! metrics), so any pose sequence written by one stage can be read by another.
//!
//! Image-plane axes: pixel column `u` runs along lateral `x`, pixel row `v`
//! along axial `y`, and the plane normal is the elevation axis `z`. The origin
//! of each frame is the image center.

pub mod diff;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of `sqrt(R00^2 + R10^2)` the decomposition takes the
/// gimbal-lock branch.
const GIMBAL_EPS: f64 = 1e-10;

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Shortest-arc difference `a - b` in degrees, in `(-180, 180]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_degrees(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles {
        rx: 0.0,
        ry: 0.0,
        rz: 0.0,
    };

    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        Self { rx, ry, rz }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.rx, self.ry, self.rz]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.rx.is_finite() && self.ry.is_finite() && self.rz.is_finite()
    }
}

/// Orthonormal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Largest deviation of `R^T R` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).amax();
        e.max((self.0.determinant() - 1.0).abs())
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Inter-frame rigid motion: translation in mm, rotation as Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rotation: EulerAngles,
}

impl Pose6 {
    pub const ZERO: Pose6 = Pose6 {
        tx: 0.0,
        ty: 0.0,
        tz: 0.0,
        rotation: EulerAngles::ZERO,
    };

    pub fn new(tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            rotation: EulerAngles::new(rx, ry, rz),
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.tx,
            self.ty,
            self.tz,
            self.rotation.rx,
            self.rotation.ry,
            self.rotation.rz,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.tx.is_finite() && self.ty.is_finite() && self.tz.is_finite() && self.rotation.is_finite()
    }
}

/// 4x4 homogeneous rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform4(pub Matrix4<f64>);

impl Transform4 {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_parts(r: &RotationMatrix, t: &Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r.0);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        Self(m)
    }

    pub fn rotation(&self) -> RotationMatrix {
        RotationMatrix(self.0.fixed_view::<3, 3>(0, 0).into_owned())
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().0 * p + self.translation()
    }

    pub fn compose(&self, rhs: &Transform4) -> Transform4 {
        compose(self, rhs)
    }

    pub fn inverse(&self) -> Transform4 {
        invert(self)
    }
}

pub fn euler_to_rotation(e: EulerAngles) -> RotationMatrix {
    let (sa, ca) = e.rx.to_radians().sin_cos();
    let (sb, cb) = e.ry.to_radians().sin_cos();
    let (sg, cg) = e.rz.to_radians().sin_cos();
    RotationMatrix(Matrix3::new(
        cg * cb,
        cg * sb * sa - sg * ca,
        cg * sb * ca + sg * sa,
        sg * cb,
        sg * sb * sa + cg * ca,
        sg * sb * ca - cg * sa,
        -sb,
        cb * sa,
        cb * ca,
    ))
}

/// Decomposes a rotation into canonical Z-Y-X angles.
///
/// At gimbal lock (`ry = ±90`) `rz` is set to zero and the coupled angle is
/// carried entirely by `rx`.
pub fn rotation_to_euler(r: &RotationMatrix) -> EulerAngles {
    let m = &r.0;
    let h = m[(0, 0)].hypot(m[(1, 0)]);
    let ry = (-m[(2, 0)]).atan2(h).to_degrees();
    if h < GIMBAL_EPS {
        let rx = (-m[(1, 2)]).atan2(m[(1, 1)]).to_degrees();
        return EulerAngles::new(wrap_degrees(rx), ry, 0.0);
    }
    let rx = m[(2, 1)].atan2(m[(2, 2)]).to_degrees();
    let rz = m[(1, 0)].atan2(m[(0, 0)]).to_degrees();
    EulerAngles::new(wrap_degrees(rx), ry, wrap_degrees(rz))
}

pub fn pose_to_matrix(p: &Pose6) -> Transform4 {
    Transform4::from_parts(&euler_to_rotation(p.rotation), &p.translation())
}

pub fn matrix_to_pose(t: &Transform4) -> Pose6 {
    let tr = t.translation();
    let e = rotation_to_euler(&t.rotation());
    Pose6 {
        tx: tr.x,
        ty: tr.y,
        tz: tr.z,
        rotation: e,
    }
}

pub fn compose(a: &Transform4, b: &Transform4) -> Transform4 {
    Transform4(a.0 * b.0)
}

/// Closed-form rigid inverse `[R^T | -R^T t]`.
pub fn invert(a: &Transform4) -> Transform4 {
    let rt = a.rotation().transpose();
    let t = -(rt.0 * a.translation());
    Transform4::from_parts(&rt, &t)
}

/// `M^-1(M(a) M(b))`.
pub fn compose_poses(a: &Pose6, b: &Pose6) -> Pose6 {
    matrix_to_pose(&compose(&pose_to_matrix(a), &pose_to_matrix(b)))
}

pub fn invert_pose(a: &Pose6) -> Pose6 {
    matrix_to_pose(&invert(&pose_to_matrix(a)))
}

/// Composition of a whole pose chain, `M^-1(M(p0) M(p1) ... )`.
pub fn chain_poses(poses: &[Pose6]) -> Pose6 {
    let t = poses
        .iter()
        .fold(Transform4::identity(), |acc, p| acc.compose(&pose_to_matrix(p)));
    matrix_to_pose(&t)
}

/// Per-frame probe placement relative to the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vector3<f64>>,
    pub rotations: Vec<RotationMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn transform(&self, i: usize) -> Result<Transform4> {
        self.check(i)?;
        Ok(Transform4::from_parts(&self.rotations[i], &self.positions[i]))
    }

    pub fn transforms(&self) -> Vec<Transform4> {
        self.positions
            .iter()
            .zip(&self.rotations)
            .map(|(p, r)| Transform4::from_parts(r, p))
            .collect()
    }

    /// Uniformly scales all positions about the origin.
    pub fn scaled(&self, s: f64) -> Trajectory {
        Trajectory {
            positions: self.positions.iter().map(|p| p * s).collect(),
            rotations: self.rotations.clone(),
        }
    }

    /// Total center-point path length in mm.
    pub fn path_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }
}

/// Chains inter-frame poses into absolute frame placements; frame 0 sits at
/// the origin with identity rotation.
pub fn accumulate_trajectory(poses: &[Pose6]) -> Trajectory {
    let mut positions = Vec::with_capacity(poses.len() + 1);
    let mut rotations = Vec::with_capacity(poses.len() + 1);
    let mut acc = Transform4::identity();
    positions.push(acc.translation());
    rotations.push(acc.rotation());
    for p in poses {
        acc = acc.compose(&pose_to_matrix(p));
        positions.push(acc.translation());
        rotations.push(acc.rotation());
    }
    Trajectory { positions, rotations }
}

/// Canonical elevation axis of the image plane.
pub const ELEVATION_AXIS: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

pub fn frame_normal(traj: &Trajectory, i: usize) -> Result<Vector3<f64>> {
    traj.check(i)?;
    Ok((traj.rotations[i].0 * ELEVATION_AXIS).normalize())
}

/// Pixel grid geometry of a B-mode frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePlane {
    pub width: usize,
    pub height: usize,
    /// mm per pixel, isotropic
    pub spacing: f64,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, spacing: f64) -> Self {
        Self {
            width,
            height,
            spacing,
        }
    }

    /// Local frame coordinates (mm) of continuous pixel position `(u, v)`.
    /// `(0, 0)` is the outer corner of the first pixel; pixel centers sit at
    /// half-integer positions.
    pub fn local_point(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.width as f64 / 2.0) * self.spacing,
            (v - self.height as f64 / 2.0) * self.spacing,
            0.0,
        )
    }

    /// Local coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> Vector3<f64> {
        self.local_point(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width as f64).contains(&u) && (0.0..=self.height as f64).contains(&v)
    }
}

pub fn pixel_to_world(
    traj: &Trajectory,
    i: usize,
    plane: &ImagePlane,
    u: f64,
    v: f64,
) -> Result<Vector3<f64>> {
    traj.check(i)?;
    if !plane.contains(u, v) {
        return Err(Error::PixelOutOfBounds {
            u,
            v,
            width: plane.width,
            height: plane.height,
        });
    }
    Ok(traj.rotations[i].0 * plane.local_point(u, v) + traj.positions[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_euler(rng: &mut ChaCha8Rng) -> EulerAngles {
        EulerAngles::new(
            rng.random_range(-179.999..180.0),
            rng.random_range(-89.0..89.0),
            rng.random_range(-179.999..180.0),
        )
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6 {
        let e = random_euler(rng);
        Pose6 {
            tx: rng.random_range(-5.0..5.0),
            ty: rng.random_range(-5.0..5.0),
            tz: rng.random_range(-5.0..5.0),
            rotation: e,
        }
    }

    fn axis_rotation(axis: usize, deg: f64) -> Matrix3<f64> {
        let (s, c) = deg.to_radians().sin_cos();
        match axis {
            0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            _ => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        }
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = euler_to_rotation(EulerAngles::ZERO);
        assert_eq!(r.0, Matrix3::identity());
        assert_eq!(rotation_to_euler(&RotationMatrix::identity()), EulerAngles::ZERO);
    }

    #[test]
    fn yaw_ninety_maps_x_to_y() {
        let r = euler_to_rotation(EulerAngles::new(0.0, 0.0, 90.0));
        let y = r.0 * Vector3::x();
        assert_abs_diff_eq!(y, Vector3::y(), epsilon = 1e-15);
        let e = rotation_to_euler(&RotationMatrix(axis_rotation(2, 90.0)));
        assert_abs_diff_eq!(e.rx, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.ry, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.rz, 90.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_hand_composed_axis_rotations() {
        let e = EulerAngles::new(12.0, -33.0, 71.0);
        let manual = axis_rotation(2, e.rz) * axis_rotation(1, e.ry) * axis_rotation(0, e.rx);
        assert_abs_diff_eq!(euler_to_rotation(e).0, manual, epsilon = 1e-15);
    }

    #[test]
    fn euler_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let e = random_euler(&mut rng);
            let r = euler_to_rotation(e);
            assert!(r.orthonormality_error() < 1e-12);
            let back = rotation_to_euler(&r);
            assert_abs_diff_eq!(angle_diff(back.rx, e.rx), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(back.ry, e.ry, epsilon = 1e-9);
            assert_abs_diff_eq!(angle_diff(back.rz, e.rz), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gimbal_lock_branch_reconstructs_matrix() {
        for &ry in &[90.0, -90.0] {
            for &(rx, rz) in &[(10.0, 20.0), (-150.0, 75.0), (0.0, -30.0)] {
                let r = euler_to_rotation(EulerAngles::new(rx, ry, rz));
                let e = rotation_to_euler(&r);
                assert_eq!(e.rz, 0.0);
                assert_abs_diff_eq!(e.ry, ry, epsilon = 1e-9);
                let back = euler_to_rotation(e);
                assert_abs_diff_eq!(back.0, r.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn canonical_range() {
        let e = rotation_to_euler(&euler_to_rotation(EulerAngles::new(180.0, 0.0, -180.0)));
        assert_abs_diff_eq!(e.rx, 180.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.rz, 180.0, epsilon = 1e-9);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(540.0), 180.0);
        assert_abs_diff_eq!(angle_diff(179.0, -179.0), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_matrix_round_trip() {
        assert_eq!(pose_to_matrix(&Pose6::ZERO).0, Matrix4::identity());
        let t = pose_to_matrix(&Pose6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0));
        assert_eq!(t.rotation().0, Matrix3::identity());
        assert_eq!(t.translation(), Vector3::new(1.0, 2.0, 3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = random_pose(&mut rng);
            let q = matrix_to_pose(&pose_to_matrix(&p));
            for (a, b) in p.to_array().iter().zip(q.to_array()) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn compose_and_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = pose_to_matrix(&random_pose(&mut rng));
        let b = pose_to_matrix(&random_pose(&mut rng));
        let c = pose_to_matrix(&random_pose(&mut rng));
        assert_eq!(compose(&Transform4::identity(), &a), a);
        assert_abs_diff_eq!(compose(&a, &invert(&a)).0, Matrix4::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(compose(&invert(&a), &a).0, Matrix4::identity(), epsilon = 1e-12);
        // direct 4x4 product
        let mut direct = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    direct[(i, j)] += a.0[(i, k)] * b.0[(k, j)];
                }
            }
        }
        assert_abs_diff_eq!(compose(&a, &b).0, direct, epsilon = 1e-12);
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        assert_abs_diff_eq!(left.0, right.0, epsilon = 1e-9);
        assert_abs_diff_eq!(invert(&invert(&a)).0, a.0, epsilon = 1e-12);
    }

    #[test]
    fn accumulate_edge_cases() {
        let t = accumulate_trajectory(&[]);
        assert_eq!(t.len(), 1);
        assert_eq!(t.positions[0], Vector3::zeros());

        let t = accumulate_trajectory(&[Pose6::ZERO; 4]);
        assert!(t.positions.iter().all(|p| *p == Vector3::zeros()));

        let step = Pose6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let t = accumulate_trajectory(&vec![step; 9]);
        for (i, p) in t.positions.iter().enumerate() {
            assert_eq!(*p, Vector3::new(0.0, 0.0, i as f64));
        }
    }

    #[test]
    fn accumulate_matches_brute_force_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let poses: Vec<Pose6> = (0..12).map(|_| random_pose(&mut rng)).collect();
        let traj = accumulate_trajectory(&poses);
        for i in 0..=poses.len() {
            let mut m = Matrix4::<f64>::identity();
            for p in &poses[..i] {
                m *= pose_to_matrix(p).0;
            }
            let expected = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
            assert_abs_diff_eq!(traj.positions[i], expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn normals() {
        let t = accumulate_trajectory(&[Pose6::new(0.0, 0.0, 0.0, 90.0, 0.0, 0.0)]);
        assert_eq!(frame_normal(&t, 0).unwrap(), ELEVATION_AXIS);
        let n = frame_normal(&t, 1).unwrap();
        // Rx(90) takes z onto -y
        assert_abs_diff_eq!(n, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-12);
        assert!(frame_normal(&t, 2).is_err());
    }

    #[test]
    fn pixel_mapping() {
        let plane = ImagePlane::new(248, 260, 0.15);
        let step = Pose6::new(1.0, -2.0, 3.0, 0.0, 0.0, 0.0);
        let traj = accumulate_trajectory(&[step, step]);
        for i in 0..3 {
            let c = pixel_to_world(&traj, i, &plane, 124.0, 130.0).unwrap();
            assert_eq!(c, traj.positions[i]);
        }
        let corner = pixel_to_world(&traj, 0, &plane, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            corner,
            Vector3::new(-124.0 * 0.15, -130.0 * 0.15, 0.0),
            epsilon = 1e-12
        );
        let corner = pixel_to_world(&traj, 0, &plane, 248.0, 260.0).unwrap();
        assert_abs_diff_eq!(
            corner,
            Vector3::new(124.0 * 0.15, 130.0 * 0.15, 0.0),
            epsilon = 1e-12
        );
        assert!(pixel_to_world(&traj, 0, &plane, 249.0, 0.0).is_err());
        assert!(pixel_to_world(&traj, 0, &plane, -0.5, 0.0).is_err());

        let rot = Pose6::new(0.0, 0.0, 5.0, 0.0, 30.0, 0.0);
        let traj = accumulate_trajectory(&[rot]);
        let got = pixel_to_world(&traj, 1, &plane, 0.0, 0.0).unwrap();
        let local = Vector3::new(-124.0 * 0.15, -130.0 * 0.15, 0.0);
        let expected = axis_rotation(1, 30.0) * local + Vector3::new(0.0, 0.0, 5.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }
}
