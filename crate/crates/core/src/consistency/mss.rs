use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::estimator::pearson_term;
use crate::geometry::{angle_diff, Pose6};
use crate::imu::{
    estimated_acceleration, estimated_acceleration_vjp, preprocess_acceleration, relative_euler, ImuSeries,
};

/// Value of the multi-modal term split into its two parts.
#[derive(Debug, Clone, PartialEq)]
pub struct MssValue {
    /// One minus the correlation of pose-derived and measured acceleration.
    pub pearson: f64,
    /// Mean absolute difference of estimated and IMU relative rotations, deg.
    pub euler: f64,
    pub grad: Vec<[f64; 6]>,
    pub degenerate: bool,
}

impl MssValue {
    pub fn total(&self) -> f64 {
        self.pearson + self.euler
    }
}

/// Correlation term between `est_acc` and `imu_acc` (interior frames, flattened
/// over axes) with gradient on `est_acc`.
pub fn acceleration_term(
    est_acc: &[Vector3<f64>],
    imu_acc: &[Vector3<f64>],
) -> (f64, Vec<Vector3<f64>>, bool) {
    let x: Vec<f64> = est_acc.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let y: Vec<f64> = imu_acc.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let (val, g, deg) = pearson_term(&x, &y);
    let g = g.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
    (val, g, deg)
}

pub fn mss_loss(est: &[Pose6], imu: &ImuSeries) -> Result<MssValue> {
    let n = est.len() + 1;
    if imu.len() != n {
        return Err(Error::LengthMismatch {
            what: "imu samples",
            expected: n,
            actual: imu.len(),
        });
    }
    if n < 4 {
        return Err(Error::TooShort {
            what: "frames",
            min: 4,
            actual: n,
        });
    }
    let est_acc = estimated_acceleration(est)?;
    let a = preprocess_acceleration(imu);
    let (pearson, g_acc, degenerate) = acceleration_term(&est_acc, &a[1..n - 1]);
    let mut grad = estimated_acceleration_vjp(est, &g_acc);

    let phi = relative_euler(imu)?;
    let w = 1.0 / (3.0 * est.len() as f64);
    let mut euler = 0.0;
    for (i, (p, f)) in est.iter().zip(&phi).enumerate() {
        let (r, fa) = (p.rotation.to_array(), f.to_array());
        for c in 0..3 {
            let d = angle_diff(r[c], fa[c]);
            euler += w * d.abs();
            let sgn = if d == 0.0 { 0.0 } else { d.signum() };
            grad[i][3 + c] += w * sgn;
        }
    }
    Ok(MssValue {
        pearson,
        euler,
        grad,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerAngles;
    use crate::imu::ImuSample;

    fn series(n: usize) -> ImuSeries {
        ImuSeries {
            samples: (0..n)
                .map(|i| {
                    let t = i as f64;
                    ImuSample {
                        orientation: EulerAngles::new(0.5 * t, -0.2 * t, 0.1 * t * t),
                        acceleration: Vector3::new((0.7 * t).sin(), (1.3 * t).cos(), 0.1 * t),
                        gravity: Vector3::new(0.0, 9.81, 0.0),
                    }
                })
                .collect(),
            dt: 1.0 / 30.0,
        }
    }

    fn poses_with_imu_rotation(imu: &ImuSeries, offset: f64) -> Vec<Pose6> {
        relative_euler(imu)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let a = e.to_array();
                Pose6::from_array([
                    0.1 * (i as f64).sin(),
                    0.05 * i as f64,
                    0.5 + 0.02 * (i * i) as f64,
                    a[0] + offset,
                    a[1] + offset,
                    a[2] + offset,
                ])
            })
            .collect()
    }

    #[test]
    fn constant_rotation_offset_gives_unit_euler_term() {
        let imu = series(8);
        let v = mss_loss(&poses_with_imu_rotation(&imu, 1.0), &imu).unwrap();
        assert!((v.euler - 1.0).abs() < 1e-9);
        let v0 = mss_loss(&poses_with_imu_rotation(&imu, 0.0), &imu).unwrap();
        assert!(v0.euler < 1e-9);
    }

    #[test]
    fn negated_acceleration_gives_two() {
        let a = vec![
            Vector3::new(1.0, -2.0, 0.5),
            Vector3::new(-0.5, 1.0, 2.0),
            Vector3::new(0.0, 0.3, -1.0),
        ];
        let neg: Vec<Vector3<f64>> = a.iter().map(|v| -v).collect();
        let (v, _, deg) = acceleration_term(&neg, &a);
        assert!((v - 2.0).abs() < 1e-12);
        assert!(!deg);
        let zero = vec![Vector3::zeros(); 3];
        let (v, g, deg) = acceleration_term(&zero, &a);
        assert_eq!(v, 1.0);
        assert!(deg);
        assert!(g.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let imu = series(9);
        let est = poses_with_imu_rotation(&imu, 0.4);
        let v = mss_loss(&est, &imu).unwrap();
        let h = 1e-6;
        for i in 0..est.len() {
            for c in 0..6 {
                let mut e = est.clone();
                let mut a = e[i].to_array();
                a[c] += h;
                e[i] = Pose6::from_array(a);
                let up = mss_loss(&e, &imu).unwrap().total();
                a[c] -= 2.0 * h;
                e[i] = Pose6::from_array(a);
                let dn = mss_loss(&e, &imu).unwrap().total();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - v.grad[i][c]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{i} {c}: {fd} {}",
                    v.grad[i][c]
                );
            }
        }
    }

    #[test]
    fn length_checks() {
        let imu = series(3);
        let est = poses_with_imu_rotation(&imu, 0.0);
        assert!(matches!(mss_loss(&est, &imu), Err(Error::TooShort { .. })));
        assert!(mss_loss(&est[..1], &imu).is_err());
    }
}
