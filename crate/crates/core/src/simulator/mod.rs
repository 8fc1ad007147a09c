//! Ground-truthed synthetic scans: phantom, probe motion, slice rendering and
//! IMU synthesis.

mod augment;
mod phantom;
mod trajectory;

pub use augment::{augment, Augmentation, DEFAULT_MAX_INTERVAL};
pub use phantom::{build_phantom, Phantom, PhantomSpec, Vessel};
pub use trajectory::{generate_trajectory, loop_boundaries, GeneratedTrajectory, Tactic, TrajectorySpec};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask};
use crate::geometry::{accumulate_trajectory, rotation_to_euler, EulerAngles, ImagePlane, Pose6, Transform4};
use crate::imu::{ImuSample, ImuSeries, DEFAULT_FPS};
use crate::scan::{AnalyticVessel, ScanBundle, ScanMeta};

/// Default frame size in pixels (width, height).
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (248, 260);
/// Default pixel spacing, mm.
pub const DEFAULT_SPACING: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub orientation_sigma_deg: f64,
    /// In simulator acceleration units (mm/frame^2).
    pub acceleration_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            orientation_sigma_deg: 0.0,
            acceleration_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.orientation_sigma_deg >= 0.0 && self.acceleration_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// World gravity in mm/frame^2 at the given frame interval, pointing along +y
/// (into the tissue).
pub fn default_gravity(dt: f64) -> Vector3<f64> {
    Vector3::new(0.0, 9810.0 * dt * dt, 0.0)
}

/// Frame `i` placements in phantom coordinates.
pub fn world_placements(base: &Transform4, poses: &[Pose6]) -> Vec<Transform4> {
    accumulate_trajectory(poses)
        .transforms()
        .iter()
        .map(|t| base.compose(t))
        .collect()
}

/// Samples the phantom on every frame plane. Intensities are rounded to
/// integers so that the in-memory frames equal their 8-bit serialization.
pub fn render_scan(phantom: &Phantom, base: &Transform4, poses: &[Pose6], plane: &ImagePlane) -> Vec<Frame> {
    world_placements(base, poses)
        .iter()
        .map(|t| {
            let r = t.rotation().0;
            let o = t.translation();
            let mut f = Frame::filled(plane.width, plane.height, 0.0);
            for row in 0..plane.height {
                for col in 0..plane.width {
                    let p = r * plane.pixel_center(col, row) + o;
                    f.set(col, row, phantom.sample(&p).round().clamp(0.0, 255.0));
                }
            }
            f
        })
        .collect()
}

/// Analytic vessel masks for each frame plane.
pub fn render_masks(vessel: &Vessel, base: &Transform4, poses: &[Pose6], plane: &ImagePlane) -> Vec<Mask> {
    world_placements(base, poses)
        .iter()
        .map(|t| {
            let r = t.rotation().0;
            let o = t.translation();
            let mut data = vec![false; plane.width * plane.height];
            for row in 0..plane.height {
                for col in 0..plane.width {
                    let p = r * plane.pixel_center(col, row) + o;
                    data[row * plane.width + col] = vessel.contains(&p);
                }
            }
            Mask {
                width: plane.width,
                height: plane.height,
                data,
            }
        })
        .collect()
}

/// Orientation, gravity-laden acceleration and gravity per frame.
///
/// Acceleration is the second central difference of the frame centers
/// expressed in the sensor (frame) axes, zero at both ends where the probe is
/// at rest.
pub fn synthesize_imu(
    base: &Transform4,
    poses: &[Pose6],
    noise: &NoiseSpec,
    gravity: &Vector3<f64>,
    dt: f64,
) -> Result<ImuSeries> {
    noise.validate()?;
    if poses.len() < 2 {
        return Err(Error::TooShort {
            what: "frames",
            min: 3,
            actual: poses.len() + 1,
        });
    }
    let placements = world_placements(base, poses);
    let n = placements.len();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ 0x1b7d_42e9);
    let o_noise = Normal::new(0.0, noise.orientation_sigma_deg).expect("sigma validated");
    let a_noise = Normal::new(0.0, noise.acceleration_sigma).expect("sigma validated");
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let rt = placements[i].rotation().transpose();
        let e = rotation_to_euler(&placements[i].rotation());
        let orientation = if noise.orientation_sigma_deg > 0.0 {
            EulerAngles::new(
                e.rx + o_noise.sample(&mut rng),
                e.ry + o_noise.sample(&mut rng),
                e.rz + o_noise.sample(&mut rng),
            )
        } else {
            e
        };
        let motion = if i == 0 || i == n - 1 {
            Vector3::zeros()
        } else {
            rt.0 * (placements[i + 1].translation() - 2.0 * placements[i].translation()
                + placements[i - 1].translation())
        };
        let g = rt.0 * gravity;
        let mut acceleration = motion + g;
        if noise.acceleration_sigma > 0.0 {
            for k in 0..3 {
                acceleration[k] += a_noise.sample(&mut rng);
            }
        }
        samples.push(ImuSample {
            orientation,
            acceleration,
            gravity: g,
        });
    }
    Ok(ImuSeries { samples, dt })
}

/// Vessel extent between the extreme frame planes of a scan.
pub fn swept_vessel(vessel: &Vessel, placements: &[Transform4]) -> AnalyticVessel {
    let d = vessel.end - vessel.start;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in placements {
        let n = t.rotation().0 * Vector3::z();
        let den = n.dot(&d);
        if den.abs() < 1e-12 {
            continue;
        }
        let s = (n.dot(&(t.translation() - vessel.start)) / den).clamp(0.0, 1.0);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let frac = if hi >= lo { hi - lo } else { 0.0 };
    let swept_length = frac * vessel.length_mm();
    AnalyticVessel {
        radius_mm: vessel.radius,
        total_length_mm: vessel.length_mm(),
        total_volume_ml: vessel.volume_ml(),
        swept_length_mm: swept_length,
        swept_volume_ml: std::f64::consts::PI * vessel.radius.powi(2) * swept_length / 1000.0,
    }
}

/// Everything needed to synthesize one scan bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    pub dt: f64,
}

impl ScanSpec {
    pub fn new(tactic: Tactic, frames: usize, seed: u64) -> Self {
        let (width, height) = DEFAULT_IMAGE_SIZE;
        let mut trajectory = TrajectorySpec::new(tactic, frames, seed);
        trajectory.image_height_mm = height as f64 * DEFAULT_SPACING;
        Self {
            trajectory,
            noise: NoiseSpec {
                seed,
                ..NoiseSpec::none()
            },
            width,
            height,
            spacing: DEFAULT_SPACING,
            dt: 1.0 / DEFAULT_FPS,
        }
    }

    /// Same scan geometry on a coarser pixel grid covering the same field of view.
    pub fn with_image(mut self, width: usize, height: usize, spacing: f64) -> Self {
        self.width = width;
        self.height = height;
        self.spacing = spacing;
        self.trajectory.image_height_mm = height as f64 * spacing;
        self
    }

    pub fn plane(&self) -> ImagePlane {
        ImagePlane::new(self.width, self.height, self.spacing)
    }
}

/// Renders a full bundle (frames, masks, IMU, ground truth) from an existing
/// phantom.
pub fn simulate_with_phantom(phantom: &Phantom, spec: &ScanSpec) -> Result<ScanBundle> {
    let traj = generate_trajectory(&spec.trajectory)?;
    let plane = spec.plane();
    let frames = render_scan(phantom, &traj.base, &traj.poses, &plane);
    let masks = render_masks(&phantom.vessel, &traj.base, &traj.poses, &plane);
    let imu = synthesize_imu(
        &traj.base,
        &traj.poses,
        &spec.noise,
        &default_gravity(spec.dt),
        spec.dt,
    )?;
    let placements = world_placements(&traj.base, &traj.poses);
    let meta = ScanMeta {
        frames: frames.len(),
        width: spec.width,
        height: spec.height,
        spacing: spec.spacing,
        dt: spec.dt,
        tactic: Some(spec.trajectory.tactic),
        seed: Some(spec.trajectory.seed),
        vessel: Some(swept_vessel(&phantom.vessel, &placements)),
        direction_changes: traj.direction_changes.clone(),
    };
    Ok(ScanBundle {
        meta,
        frames,
        imu,
        gt_poses: Some(traj.poses),
        masks: Some(masks),
    })
}

/// Builds the default phantom for `seed` and renders a bundle from it.
pub fn simulate(spec: &ScanSpec) -> Result<ScanBundle> {
    let phantom = build_phantom(&PhantomSpec {
        seed: spec.trajectory.seed,
        ..PhantomSpec::default()
    })?;
    simulate_with_phantom(&phantom, spec)
}
