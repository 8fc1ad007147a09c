//! Reverse-mode derivatives (vector-Jacobian products) of the pose algebra.
//!
//! Every `*_vjp` takes the upstream gradient of a scalar objective with
//! respect to an operation's output and returns the gradient with respect to
//! its inputs. Angles are differentiated per degree.

use nalgebra::{Matrix3, Matrix4, Vector3};

use super::{euler_to_rotation, pose_to_matrix, EulerAngles, Pose6, RotationMatrix, Transform4, GIMBAL_EPS};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Partial derivatives `dR/drx, dR/dry, dR/drz` (per degree).
pub fn rotation_jacobian(e: EulerAngles) -> [Matrix3<f64>; 3] {
    let (sa, ca) = e.rx.to_radians().sin_cos();
    let (sb, cb) = e.ry.to_radians().sin_cos();
    let (sg, cg) = e.rz.to_radians().sin_cos();
    let d_rx = Matrix3::new(
        0.0,
        cg * sb * ca + sg * sa,
        -cg * sb * sa + sg * ca,
        0.0,
        sg * sb * ca - cg * sa,
        -sg * sb * sa - cg * ca,
        0.0,
        cb * ca,
        -cb * sa,
    );
    let d_ry = Matrix3::new(
        -cg * sb,
        cg * cb * sa,
        cg * cb * ca,
        -sg * sb,
        sg * cb * sa,
        sg * cb * ca,
        -cb,
        -sb * sa,
        -sb * ca,
    );
    let d_rz = Matrix3::new(
        -sg * cb,
        -sg * sb * sa - cg * ca,
        -sg * sb * ca + cg * sa,
        cg * cb,
        cg * sb * sa - sg * ca,
        cg * sb * ca + sg * sa,
        0.0,
        0.0,
        0.0,
    );
    [d_rx * DEG, d_ry * DEG, d_rz * DEG]
}

/// Pulls a gradient on `R = M(e)` back to the angles.
pub fn euler_to_rotation_vjp(e: EulerAngles, g_r: &Matrix3<f64>) -> [f64; 3] {
    let j = rotation_jacobian(e);
    [j[0].dot(g_r), j[1].dot(g_r), j[2].dot(g_r)]
}

/// Pulls a gradient on the decomposed angles back to the matrix entries.
pub fn rotation_to_euler_vjp(r: &RotationMatrix, g: [f64; 3]) -> Matrix3<f64> {
    let m = &r.0;
    let mut out = Matrix3::zeros();
    let rad = 1.0 / DEG;
    let h = m[(0, 0)].hypot(m[(1, 0)]);
    if h < GIMBAL_EPS {
        // rx = atan2(-R12, R11), rz fixed, ry derivative treated as locally flat
        let (y, x) = (-m[(1, 2)], m[(1, 1)]);
        let den = x * x + y * y;
        out[(1, 2)] -= g[0] * rad * x / den;
        out[(1, 1)] -= g[0] * rad * y / den;
        return out;
    }
    // rx = atan2(R21, R22)
    let den = m[(2, 1)].powi(2) + m[(2, 2)].powi(2);
    out[(2, 1)] += g[0] * rad * m[(2, 2)] / den;
    out[(2, 2)] -= g[0] * rad * m[(2, 1)] / den;
    // ry = atan2(-R20, h)
    let y = -m[(2, 0)];
    let den = y * y + h * h;
    out[(2, 0)] -= g[1] * rad * h / den;
    let d_h = -g[1] * rad * y / den;
    out[(0, 0)] += d_h * m[(0, 0)] / h;
    out[(1, 0)] += d_h * m[(1, 0)] / h;
    // rz = atan2(R10, R00)
    let den = m[(1, 0)].powi(2) + m[(0, 0)].powi(2);
    out[(1, 0)] += g[2] * rad * m[(0, 0)] / den;
    out[(0, 0)] -= g[2] * rad * m[(1, 0)] / den;
    out
}

/// Gradient of a 4x4 transform pulled back to its pose parameters.
pub fn pose_to_matrix_vjp(p: &Pose6, g: &Matrix4<f64>) -> [f64; 6] {
    let g_r: Matrix3<f64> = g.fixed_view::<3, 3>(0, 0).into_owned();
    let ge = euler_to_rotation_vjp(p.rotation, &g_r);
    [g[(0, 3)], g[(1, 3)], g[(2, 3)], ge[0], ge[1], ge[2]]
}

/// Gradient on pose parameters pulled back to the 4x4 transform they were
/// decomposed from.
pub fn matrix_to_pose_vjp(t: &Transform4, g: [f64; 6]) -> Matrix4<f64> {
    let g_r = rotation_to_euler_vjp(&t.rotation(), [g[3], g[4], g[5]]);
    let mut out = Matrix4::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&g_r);
    out[(0, 3)] = g[0];
    out[(1, 3)] = g[1];
    out[(2, 3)] = g[2];
    out
}

/// VJP of `compose_poses(a, b)`.
pub fn compose_poses_vjp(a: &Pose6, b: &Pose6, g: [f64; 6]) -> ([f64; 6], [f64; 6]) {
    let ma = pose_to_matrix(a);
    let mb = pose_to_matrix(b);
    let prod = Transform4(ma.0 * mb.0);
    let g_prod = matrix_to_pose_vjp(&prod, g);
    let g_a = g_prod * mb.0.transpose();
    let g_b = ma.0.transpose() * g_prod;
    (pose_to_matrix_vjp(a, &g_a), pose_to_matrix_vjp(b, &g_b))
}

/// VJP of `invert_pose(a)`.
pub fn invert_pose_vjp(a: &Pose6, g: [f64; 6]) -> [f64; 6] {
    let r = euler_to_rotation(a.rotation).0;
    let t = a.translation();
    let inv = super::invert(&pose_to_matrix(a));
    let g_inv = matrix_to_pose_vjp(&inv, g);
    // inverse = [R^T | -R^T t]
    let g_rt: Matrix3<f64> = g_inv.fixed_view::<3, 3>(0, 0).into_owned();
    let g_tinv = Vector3::new(g_inv[(0, 3)], g_inv[(1, 3)], g_inv[(2, 3)]);
    let mut g_r = g_rt.transpose();
    // d(-R^T t): dR contribution -(t g^T)... for y = -R^T t, dL/dR = -t g^T
    g_r -= t * g_tinv.transpose();
    let g_t = -(r * g_tinv);
    let ge = euler_to_rotation_vjp(a.rotation, &g_r);
    [g_t.x, g_t.y, g_t.z, ge[0], ge[1], ge[2]]
}

/// VJP of `chain_poses(poses)`.
pub fn chain_poses_vjp(poses: &[Pose6], g: [f64; 6]) -> Vec<[f64; 6]> {
    let mats: Vec<Matrix4<f64>> = poses.iter().map(|p| pose_to_matrix(p).0).collect();
    let n = mats.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Matrix4::identity());
    for m in &mats {
        let next = prefix.last().unwrap() * m;
        prefix.push(next);
    }
    let mut suffix = vec![Matrix4::identity(); n + 1];
    for i in (0..n).rev() {
        suffix[i] = mats[i] * suffix[i + 1];
    }
    let g_total = matrix_to_pose_vjp(&Transform4(prefix[n]), g);
    (0..n)
        .map(|i| {
            let g_i = prefix[i].transpose() * g_total * suffix[i + 1].transpose();
            pose_to_matrix_vjp(&poses[i], &g_i)
        })
        .collect()
}

/// Translation part of the inverted pose, `-R^T t`.
pub fn inverse_translation(p: &Pose6) -> Vector3<f64> {
    -(euler_to_rotation(p.rotation).0.transpose() * p.translation())
}

pub fn inverse_translation_vjp(p: &Pose6, g: &Vector3<f64>) -> [f64; 6] {
    let r = euler_to_rotation(p.rotation).0;
    let t = p.translation();
    // y = -R^T t  =>  dL/dt = -R g,  dL/dR = -t g^T
    let g_t = -(r * g);
    let g_r = -(t * g.transpose());
    let ge = euler_to_rotation_vjp(p.rotation, &g_r);
    [g_t.x, g_t.y, g_t.z, ge[0], ge[1], ge[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{chain_poses, compose_poses, invert_pose, matrix_to_pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6 {
        Pose6::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(-40.0..40.0),
        )
    }

    fn weights(rng: &mut ChaCha8Rng) -> [f64; 6] {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    fn dot6(a: [f64; 6], b: [f64; 6]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn fd_pose(p: &Pose6, f: impl Fn(&Pose6) -> f64) -> [f64; 6] {
        std::array::from_fn(|k| {
            let mut a = p.to_array();
            let mut b = p.to_array();
            a[k] += H;
            b[k] -= H;
            (f(&Pose6::from_array(a)) - f(&Pose6::from_array(b))) / (2.0 * H)
        })
    }

    fn assert_close(a: [f64; 6], b: [f64; 6]) {
        for k in 0..6 {
            let scale = a[k].abs().max(b[k].abs()).max(1e-3);
            assert!((a[k] - b[k]).abs() / scale < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let e = EulerAngles::new(20.0, -35.0, 110.0);
        let j = rotation_jacobian(e);
        for k in 0..3 {
            let mut a = e.to_array();
            let mut b = e.to_array();
            a[k] += H;
            b[k] -= H;
            let fd = (euler_to_rotation(EulerAngles::from_array(a)).0
                - euler_to_rotation(EulerAngles::from_array(b)).0)
                / (2.0 * H);
            assert!((fd - j[k]).amax() < 1e-9);
        }
    }

    #[test]
    fn matrix_round_trip_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let w = weights(&mut rng);
            // f(p) = w . M^-1(M(p)) = w . p ; the composite Jacobian is identity
            let g = pose_to_matrix_vjp(&p, &matrix_to_pose_vjp(&pose_to_matrix(&p), w));
            assert_close(g, w);
        }
    }

    #[test]
    fn compose_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let w = weights(&mut rng);
            let (ga, gb) = compose_poses_vjp(&a, &b, w);
            assert_close(ga, fd_pose(&a, |x| dot6(w, compose_poses(x, &b).to_array())));
            assert_close(gb, fd_pose(&b, |x| dot6(w, compose_poses(&a, x).to_array())));
        }
    }

    #[test]
    fn invert_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let a = random_pose(&mut rng);
            let w = weights(&mut rng);
            assert_close(
                invert_pose_vjp(&a, w),
                fd_pose(&a, |x| dot6(w, invert_pose(x).to_array())),
            );
            let w3 = Vector3::new(w[0], w[1], w[2]);
            assert_close(
                inverse_translation_vjp(&a, &w3),
                fd_pose(&a, |x| w3.dot(&inverse_translation(x))),
            );
            assert!((inverse_translation(&a) - invert_pose(&a).translation()).amax() < 1e-12);
        }
    }

    #[test]
    fn chain_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let poses: Vec<Pose6> = (0..5).map(|_| random_pose(&mut rng)).collect();
        let w = weights(&mut rng);
        let g = chain_poses_vjp(&poses, w);
        for i in 0..poses.len() {
            let fd = fd_pose(&poses[i], |x| {
                let mut p = poses.clone();
                p[i] = *x;
                dot6(w, chain_poses(&p).to_array())
            });
            assert_close(g[i], fd);
        }
        let two = chain_poses(&poses[..2]);
        let direct = compose_poses(&poses[0], &poses[1]);
        assert_close(two.to_array(), direct.to_array());
        let _ = matrix_to_pose;
    }
}
