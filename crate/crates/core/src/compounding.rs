//! Volume reconstruction from posed frames and vessel statistics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask};
use crate::geometry::{accumulate_trajectory, ImagePlane, Pose6, Trajectory, Transform4};
use crate::scan::ScanBundle;
use crate::stats::{mean, median, std_dev};

/// Elevation steps above this multiple of the median step are clamped.
pub const STEP_CLAMP: f64 = 5.0;
/// Largest volume `compound` will allocate.
pub const MAX_VOXELS: usize = 400_000_000;

/// Regular grid of accumulated intensities and weights, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    /// World position of voxel `(0, 0, 0)`.
    pub origin: Vector3<f64>,
    pub values: Vec<f32>,
    pub weights: Vec<f32>,
}

/// Header stored next to the raw voxel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub origin: [f64; 3],
}

impl Volume {
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    /// Weighted mean intensity, `None` where nothing was splatted.
    pub fn value(&self, x: usize, y: usize, z: usize) -> Option<f32> {
        let i = self.index(x, y, z);
        (self.weights[i] > 0.0).then_some(self.values[i])
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin + Vector3::new(x as f64, y as f64, z as f64) * self.voxel_size
    }

    pub fn header(&self) -> VolumeHeader {
        VolumeHeader {
            dims: self.dims,
            voxel_size: self.voxel_size,
            origin: [self.origin.x, self.origin.y, self.origin.z],
        }
    }

    pub fn covered(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

fn world_pixels(t: &Transform4, plane: &ImagePlane) -> impl Iterator<Item = (usize, Vector3<f64>)> {
    let r = t.rotation().0;
    let tr = t.translation();
    let plane = *plane;
    (0..plane.height).flat_map(move |row| {
        (0..plane.width).map(move |col| (row * plane.width + col, r * plane.pixel_center(col, row) + tr))
    })
}

/// Splats every pixel at its world position with trilinear weights and
/// normalizes to the weighted mean. Frames are accumulated in index order.
pub fn compound(bundle: &ScanBundle, poses: &[Pose6], voxel_size: f64) -> Result<Volume> {
    if poses.len() + 1 != bundle.len() {
        return Err(Error::LengthMismatch {
            what: "poses + 1",
            expected: bundle.len(),
            actual: poses.len() + 1,
        });
    }
    let traj = accumulate_trajectory(poses);
    let placed: Vec<(&Frame, Transform4)> = bundle.frames.iter().zip(traj.transforms()).collect();
    compound_placed(&bundle.plane(), &placed, voxel_size)
}

/// Compounds frames given their frame-to-world transforms. The grid origin is
/// the lowest pixel-center position on each axis.
pub fn compound_placed(
    plane: &ImagePlane,
    frames: &[(&Frame, Transform4)],
    voxel_size: f64,
) -> Result<Volume> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to compound".into()));
    }
    for (f, _) in frames {
        if f.width != plane.width || f.height != plane.height {
            return Err(Error::InvalidInput(
                "frame size disagrees with the image plane".into(),
            ));
        }
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (_, t) in frames {
        for (_, p) in world_pixels(t, plane) {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    if !(lo.iter().chain(hi.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("frame positions".into()));
    }
    let ext = hi - lo;
    if ext.iter().filter(|&&e| e > 0.0).count() < 2 {
        return Err(Error::Degenerate("frames span no area".into()));
    }
    let dims: [usize; 3] = std::array::from_fn(|a| (ext[a] / voxel_size).floor() as usize + 2);
    let total = dims[0] * dims[1] * dims[2];
    if total > MAX_VOXELS {
        return Err(Error::InvalidInput(format!(
            "volume of {total} voxels is too large"
        )));
    }
    let mut vol = Volume {
        dims,
        voxel_size,
        origin: lo,
        values: vec![0.0; total],
        weights: vec![0.0; total],
    };
    let mut acc = vec![0.0f64; total];
    let mut wsum = vec![0.0f64; total];
    for (frame, t) in frames {
        for (k, p) in world_pixels(t, plane) {
            let f = (p - lo) / voxel_size;
            let b: [usize; 3] = std::array::from_fn(|a| (f[a].floor().max(0.0) as usize).min(dims[a] - 2));
            let fr: [f64; 3] = std::array::from_fn(|a| (f[a] - b[a] as f64).clamp(0.0, 1.0));
            let v = frame.data[k] as f64;
            for dz in 0..2 {
                let wz = if dz == 0 { 1.0 - fr[2] } else { fr[2] };
                for dy in 0..2 {
                    let wy = if dy == 0 { 1.0 - fr[1] } else { fr[1] };
                    for dx in 0..2 {
                        let wx = if dx == 0 { 1.0 - fr[0] } else { fr[0] };
                        let w = wx * wy * wz;
                        if w > 0.0 {
                            let idx = vol.index(b[0] + dx, b[1] + dy, b[2] + dz);
                            acc[idx] += w * v;
                            wsum[idx] += w;
                        }
                    }
                }
            }
        }
    }
    for i in 0..total {
        if wsum[i] > 0.0 {
            vol.values[i] = (acc[i] / wsum[i]) as f32;
            vol.weights[i] = wsum[i] as f32;
        }
    }
    Ok(vol)
}

/// Index-matched distance summary between two centerlines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

pub fn voxel_distance_model(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<DistanceSummary> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated centerline",
            expected: gt.len(),
            actual: est.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty centerlines".into()));
    }
    let d: Vec<f64> = est.iter().zip(gt).map(|(a, b)| (a - b).norm()).collect();
    Ok(DistanceSummary {
        mean: mean(&d),
        std: std_dev(&d),
        max: d.iter().cloned().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselStats {
    pub volume_ml: f64,
    pub length_mm: f64,
    /// Frames whose mask is non-empty.
    pub frames: Vec<usize>,
    /// World positions of the mask centroids of those frames.
    pub centerline: Vec<[f64; 3]>,
}

impl VesselStats {
    pub fn centerline_points(&self) -> Vec<Vector3<f64>> {
        self.centerline.iter().map(|p| Vector3::from(*p)).collect()
    }
}

/// Elevation step of every frame: distance to the next frame center, clamped
/// to `STEP_CLAMP` times the median; the last frame contributes no slab.
pub fn elevation_steps(traj: &Trajectory) -> Vec<f64> {
    let n = traj.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let raw: Vec<f64> = traj.positions.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let cap = STEP_CLAMP * median(&raw);
    let mut steps: Vec<f64> = raw.iter().map(|s| s.clamp(0.0, cap)).collect();
    steps.push(0.0);
    steps
}

/// Centroid polyline length and slab-summed lumen volume from per-frame masks.
pub fn vessel_stats(bundle: &ScanBundle, poses: &[Pose6]) -> Result<VesselStats> {
    let masks: &[Mask] = bundle
        .masks
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("bundle carries no vessel masks".into()))?;
    if poses.len() + 1 != masks.len() {
        return Err(Error::LengthMismatch {
            what: "poses + 1",
            expected: masks.len(),
            actual: poses.len() + 1,
        });
    }
    let plane = bundle.plane();
    let traj = accumulate_trajectory(poses);
    let steps = elevation_steps(&traj);
    let area = plane.spacing * plane.spacing;
    let mut volume = 0.0;
    let mut frames = Vec::new();
    let mut centerline = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        volume += m.count() as f64 * area * steps[i];
        if let Some((u, v)) = m.centroid() {
            let p = traj.rotations[i].0 * plane.local_point(u, v) + traj.positions[i];
            frames.push(i);
            centerline.push([p.x, p.y, p.z]);
        }
    }
    if frames.is_empty() {
        return Err(Error::InvalidInput(
            "vessel masks are empty on every frame".into(),
        ));
    }
    let length = centerline
        .windows(2)
        .map(|w| (Vector3::from(w[1]) - Vector3::from(w[0])).norm())
        .sum();
    Ok(VesselStats {
        volume_ml: volume / 1000.0,
        length_mm: length,
        frames,
        centerline,
    })
}

/// Distance summary of two stats computed on the same scan, over frames where
/// both saw the vessel.
pub fn compare_centerlines(est: &VesselStats, gt: &VesselStats) -> Result<DistanceSummary> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, f) in est.frames.iter().enumerate() {
        if let Ok(j) = gt.frames.binary_search(f) {
            a.push(Vector3::from(est.centerline[i]));
            b.push(Vector3::from(gt.centerline[j]));
        }
    }
    voxel_distance_model(&a, &b)
}
