//! IMU preprocessing and the pose-derived pseudo-acceleration.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    diff::{inverse_translation, inverse_translation_vjp},
    euler_to_rotation, rotation_to_euler, EulerAngles, Pose6, RotationMatrix,
};

/// Default acquisition rate, frames per second.
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Absolute sensor orientation in the world frame.
    pub orientation: EulerAngles,
    pub acceleration: Vector3<f64>,
    pub gravity: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSeries {
    pub samples: Vec<ImuSample>,
    /// Seconds per frame.
    pub dt: f64,
}

impl ImuSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            let ok = s.orientation.is_finite()
                && s.acceleration.iter().all(|x| x.is_finite())
                && s.gravity.iter().all(|x| x.is_finite());
            if !ok {
                return Err(Error::NonFinite(format!("imu sample {i}")));
            }
        }
        Ok(())
    }

    /// Samples at the given frame indices, keeping `dt` (time is counted in frames of the parent scan).
    pub fn select(&self, indices: &[usize]) -> ImuSeries {
        ImuSeries {
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            dt: self.dt,
        }
    }
}

/// Relative rotation between consecutive absolute orientations,
/// `phi_i = M^-1(M(O_i)^-1 M(O_{i+1}))`.
pub fn relative_euler(series: &ImuSeries) -> Result<Vec<EulerAngles>> {
    let o: Vec<EulerAngles> = series.samples.iter().map(|s| s.orientation).collect();
    relative_euler_from_orientations(&o)
}

pub fn relative_euler_from_orientations(o: &[EulerAngles]) -> Result<Vec<EulerAngles>> {
    if o.len() < 2 {
        return Err(Error::TooShort {
            what: "imu samples",
            min: 2,
            actual: o.len(),
        });
    }
    let mats: Vec<RotationMatrix> = o.iter().map(|e| euler_to_rotation(*e)).collect();
    Ok(mats
        .windows(2)
        .map(|w| rotation_to_euler(&(w[0].transpose() * w[1])))
        .collect())
}

/// Gravity removal followed by mean-centering over the whole series.
pub fn preprocess_acceleration(series: &ImuSeries) -> Vec<Vector3<f64>> {
    let raw: Vec<Vector3<f64>> = series
        .samples
        .iter()
        .map(|s| s.acceleration - s.gravity)
        .collect();
    center(&raw)
}

fn center(v: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    if v.is_empty() {
        return Vec::new();
    }
    let mean = v.iter().sum::<Vector3<f64>>() / v.len() as f64;
    v.iter().map(|a| a - mean).collect()
}

/// Pseudo-acceleration from inter-frame poses: for interior frames
/// `i = 1..N-2` (0-based), `t^-1_{i-1} + t_i`, mean-centered. The result is a
/// second difference of center positions expressed in the frame of image `i`.
pub fn estimated_acceleration(poses: &[Pose6]) -> Result<Vec<Vector3<f64>>> {
    if poses.len() < 2 {
        return Err(Error::TooShort {
            what: "frames",
            min: 3,
            actual: poses.len() + 1,
        });
    }
    let raw: Vec<Vector3<f64>> = poses
        .windows(2)
        .map(|w| inverse_translation(&w[0]) + w[1].translation())
        .collect();
    Ok(center(&raw))
}

/// Pulls gradients on the centered pseudo-acceleration back to the poses.
pub fn estimated_acceleration_vjp(poses: &[Pose6], g: &[Vector3<f64>]) -> Vec<[f64; 6]> {
    let m = g.len();
    let mut out = vec![[0.0; 6]; poses.len()];
    if m == 0 {
        return out;
    }
    let mean_g = g.iter().sum::<Vector3<f64>>() / m as f64;
    for (i, gi) in g.iter().enumerate() {
        let gc = gi - mean_g;
        let inv = inverse_translation_vjp(&poses[i], &gc);
        for k in 0..6 {
            out[i][k] += inv[k];
        }
        for k in 0..3 {
            out[i + 1][k] += gc[k];
        }
    }
    out
}
