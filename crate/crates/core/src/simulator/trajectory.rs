use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euler_to_rotation, matrix_to_pose, EulerAngles, Pose6, Transform4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tactic {
    Linear,
    Curved,
    Loop,
    Sector,
}

impl Tactic {
    pub const ALL: [Tactic; 4] = [Tactic::Linear, Tactic::Curved, Tactic::Loop, Tactic::Sector];
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tactic::Linear => "linear",
            Tactic::Curved => "curved",
            Tactic::Loop => "loop",
            Tactic::Sector => "sector",
        };
        f.write_str(s)
    }
}

impl FromStr for Tactic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Tactic::Linear),
            "curved" => Ok(Tactic::Curved),
            "loop" => Ok(Tactic::Loop),
            "sector" => Ok(Tactic::Sector),
            other => Err(Error::InvalidInput(format!("unknown tactic '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub tactic: Tactic,
    pub frames: usize,
    /// Mean elevation speed, mm/frame (for sector: speed at the image center).
    pub speed: f64,
    /// Relative amplitude of the slow sinusoidal speed modulation.
    pub speed_variation: f64,
    /// Number of modulation cycles over the scan.
    pub speed_cycles: f64,
    /// Relative per-frame random speed jitter.
    pub speed_jitter: f64,
    /// Total heading change of a curved scan, degrees.
    pub curvature_deg: f64,
    /// Total fan angle of a sector scan, degrees.
    pub sweep_deg: f64,
    /// Amplitude of slow hand tilt about the lateral and axial axes, degrees.
    pub wobble_deg: f64,
    /// Image height in mm; the sector pivot sits on the probe face.
    pub image_height_mm: f64,
    pub seed: u64,
}

impl TrajectorySpec {
    pub fn new(tactic: Tactic, frames: usize, seed: u64) -> Self {
        Self {
            tactic,
            frames,
            speed: 0.5,
            speed_variation: 0.0,
            speed_cycles: 1.0,
            speed_jitter: 0.0,
            curvature_deg: 30.0,
            sweep_deg: 30.0,
            wobble_deg: 0.0,
            image_height_mm: 260.0 * 0.15,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 3 {
            return Err(Error::TooShort {
                what: "frames",
                min: 3,
                actual: self.frames,
            });
        }
        if self.tactic == Tactic::Loop && self.frames < 10 {
            return Err(Error::TooShort {
                what: "frames for a loop",
                min: 10,
                actual: self.frames,
            });
        }
        let finite = [
            self.speed,
            self.speed_variation,
            self.speed_cycles,
            self.speed_jitter,
            self.curvature_deg,
            self.sweep_deg,
            self.wobble_deg,
            self.image_height_mm,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory spec".into()));
        }
        if self.speed <= 0.0 || self.speed_variation.abs() >= 1.0 || self.speed_jitter < 0.0 {
            return Err(Error::InvalidInput(
                "speed must be positive and its modulation below 100%".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth motion of one simulated scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrajectory {
    pub poses: Vec<Pose6>,
    /// Frame indices at which a loop scan reverses direction.
    pub direction_changes: Vec<usize>,
    /// Placement of frame 0 in phantom coordinates.
    pub base: Transform4,
}

/// Frame boundaries of the five monotone segments of a loop scan.
pub fn loop_boundaries(frames: usize) -> [usize; 4] {
    std::array::from_fn(|j| ((j + 1) as f64 * frames as f64 / 5.0).round() as usize)
}

fn speed_profile(spec: &TrajectorySpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = spec.frames - 1;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    (0..m)
        .map(|i| {
            let t = i as f64 / m as f64;
            let slow =
                1.0 + spec.speed_variation * (std::f64::consts::TAU * spec.speed_cycles * t + phase).sin();
            let jitter = if spec.speed_jitter > 0.0 {
                1.0 + spec.speed_jitter * rng.random_range(-1.0..1.0)
            } else {
                1.0
            };
            spec.speed * slow * jitter
        })
        .collect()
}

fn wobble(spec: &TrajectorySpec, rng: &mut ChaCha8Rng) -> Vec<EulerAngles> {
    // absolute tilt angles per frame; relative poses take their differences
    let n = spec.frames;
    if spec.wobble_deg == 0.0 {
        return vec![EulerAngles::ZERO; n];
    }
    let (p1, p2) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let (c1, c2) = (rng.random_range(0.7..1.6), rng.random_range(0.7..1.6));
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let a = spec.wobble_deg * ((std::f64::consts::TAU * c1 * t + p1).sin() - p1.sin());
            let b = spec.wobble_deg * ((std::f64::consts::TAU * c2 * t + p2).sin() - p2.sin());
            EulerAngles::new(a, b, 0.0)
        })
        .collect()
}

pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<GeneratedTrajectory> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7a3c_5e11);
    let speeds = speed_profile(spec, &mut rng);
    let tilt = wobble(spec, &mut rng);
    let m = spec.frames - 1;

    // absolute placements, frame 0 at identity
    let mut abs = Vec::with_capacity(spec.frames);
    let mut direction_changes = Vec::new();
    match spec.tactic {
        Tactic::Linear | Tactic::Curved => {
            let yaw_step = if spec.tactic == Tactic::Curved {
                spec.curvature_deg / m as f64
            } else {
                0.0
            };
            let mut pos = Vector3::zeros();
            let mut heading = 0.0f64;
            abs.push((pos, heading));
            for &v in &speeds {
                // advance along the current elevation direction, then turn
                let dir = euler_to_rotation(EulerAngles::new(0.0, heading, 0.0)).0 * Vector3::z();
                pos += dir * v;
                heading += yaw_step;
                abs.push((pos, heading));
            }
        }
        Tactic::Loop => {
            let b = loop_boundaries(spec.frames);
            direction_changes.extend_from_slice(&b);
            let mut z = 0.0;
            abs.push((Vector3::zeros(), 0.0));
            for (i, &v) in speeds.iter().enumerate() {
                let seg = b.iter().filter(|&&c| i >= c).count();
                let sign = if seg % 2 == 0 { 1.0 } else { -1.0 };
                z += sign * v;
                abs.push((Vector3::new(0.0, 0.0, z), 0.0));
            }
        }
        Tactic::Sector => {
            // fan about the lateral axis through the probe face
            let radius = spec.image_height_mm / 2.0;
            let mean_step = spec.sweep_deg / m as f64;
            let mean_speed = speeds.iter().sum::<f64>() / m as f64;
            let mut angle = 0.0f64;
            abs.push((Vector3::zeros(), 0.0));
            for &v in &speeds {
                angle += mean_step * v / mean_speed;
                abs.push((Vector3::zeros(), angle));
            }
            let pivot = Vector3::new(0.0, -radius, 0.0);
            let placements: Vec<Transform4> = abs
                .iter()
                .zip(&tilt)
                .map(|(&(_, a), w)| {
                    let r = euler_to_rotation(EulerAngles::new(a + w.rx, w.ry, 0.0));
                    let t = pivot - r.0 * pivot;
                    Transform4::from_parts(&r, &t)
                })
                .collect();
            return Ok(finish(placements, direction_changes));
        }
    }
    let placements: Vec<Transform4> = abs
        .iter()
        .zip(&tilt)
        .map(|(&(p, heading), w)| {
            let r = euler_to_rotation(EulerAngles::new(w.rx, heading + w.ry, 0.0));
            Transform4::from_parts(&r, &p)
        })
        .collect();
    Ok(finish(placements, direction_changes))
}

fn finish(placements: Vec<Transform4>, direction_changes: Vec<usize>) -> GeneratedTrajectory {
    let poses = placements
        .windows(2)
        .map(|w| matrix_to_pose(&w[0].inverse().compose(&w[1])))
        .collect();
    GeneratedTrajectory {
        poses,
        direction_changes,
        base: Transform4::identity(),
    }
}
