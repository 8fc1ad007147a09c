use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Straight cylindrical vessel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
    /// mm
    pub radius: f64,
}

impl Vessel {
    pub fn length_mm(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn volume_ml(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * self.length_mm() / 1000.0
    }

    pub fn axis(&self) -> Vector3<f64> {
        (self.end - self.start).normalize()
    }

    /// Distance from `p` to the axis segment, or `None` beyond the end caps.
    pub fn radial_distance(&self, p: &Vector3<f64>) -> Option<f64> {
        let d = self.end - self.start;
        let s = (p - self.start).dot(&d) / d.norm_squared();
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        Some((p - (self.start + d * s)).norm())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.radial_distance(p).is_some_and(|r| r <= self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// World-space corner of the first voxel center (mm).
    pub min: Vector3<f64>,
    /// World-space upper corner (mm); the grid covers `[min, max]`.
    pub max: Vector3<f64>,
    pub voxel_size: f64,
    /// Gaussian blur of the speckle field, in voxels.
    pub speckle_sigma: f64,
    pub mean_intensity: f64,
    pub contrast: f64,
    /// Multiplicative attenuation inside the vessel lumen.
    pub vessel_attenuation: f64,
    pub vessel: Vessel,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            min: Vector3::new(-34.0, -24.0, -24.0),
            max: Vector3::new(34.0, 24.0, 104.0),
            voxel_size: 0.5,
            speckle_sigma: 1.2,
            mean_intensity: 128.0,
            contrast: 45.0,
            vessel_attenuation: 0.2,
            vessel: Vessel {
                start: Vector3::new(0.0, 0.0, -20.0),
                end: Vector3::new(0.0, 0.0, 100.0),
                radius: 3.0,
            },
            seed: 0,
        }
    }
}

/// Procedural scalar volume with a dark tube.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vector3<f64>,
    pub data: Vec<f32>,
    pub vessel: Vessel,
}

impl Phantom {
    #[inline]
    fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn voxel(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.idx(x, y, z)]
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin + Vector3::new(x as f64, y as f64, z as f64) * self.voxel_size
    }

    pub fn upper_corner(&self) -> Vector3<f64> {
        self.voxel_center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Trilinear sample; zero outside the grid.
    pub fn sample(&self, p: &Vector3<f64>) -> f32 {
        let f = (p - self.origin) / self.voxel_size;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let hi = (self.dims[a] - 1) as f64;
            if !(0.0..=hi).contains(&f[a]) {
                return 0.0;
            }
            let b = (f[a].floor() as usize).min(self.dims[a].saturating_sub(2));
            base[a] = b;
            frac[a] = f[a] - b as f64;
        }
        let mut acc = 0.0f64;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * self.voxel(base[0] + dx, base[1] + dy, base[2] + dz) as f64;
                    }
                }
            }
        }
        acc as f32
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

fn blur_axis(data: &mut [f32], dims: [usize; 3], axis: usize, kernel: &[f32]) {
    let r = (kernel.len() / 2) as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis] as isize;
    let src = data.to_vec();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let pos = [x, y, z][axis] as isize;
                let base = (z * dims[1] + y) * dims[0] + x;
                let line0 = base as isize - pos * stride as isize;
                let mut acc = 0.0f32;
                for (k, w) in kernel.iter().enumerate() {
                    let q = (pos + k as isize - r).clamp(0, n - 1);
                    acc += w * src[(line0 + q * stride as isize) as usize];
                }
                data[base] = acc;
            }
        }
    }
}

pub fn build_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if !(spec.voxel_size > 0.0 && spec.voxel_size.is_finite()) {
        return Err(Error::InvalidInput("voxel size must be positive".into()));
    }
    let ext = spec.max - spec.min;
    if ext.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidInput(
            "phantom extent must be positive on every axis".into(),
        ));
    }
    let v = &spec.vessel;
    if !(v.radius > 0.0 && v.radius.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "vessel radius must be positive, got {}",
            v.radius
        )));
    }
    if v.length_mm() <= 0.0 {
        return Err(Error::InvalidInput("vessel has zero length".into()));
    }
    for end in [v.start, v.end] {
        for a in 0..3 {
            if end[a] - v.radius <= spec.min[a] || end[a] + v.radius >= spec.max[a] {
                return Err(Error::InvalidInput(format!(
                    "vessel endpoint {:?} with radius {} leaves the phantom",
                    end, v.radius
                )));
            }
        }
    }
    let dims = [
        (ext.x / spec.voxel_size).floor() as usize + 1,
        (ext.y / spec.voxel_size).floor() as usize + 1,
        (ext.z / spec.voxel_size).floor() as usize + 1,
    ];
    let total = dims[0] * dims[1] * dims[2];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data: Vec<f32> = (0..total).map(|_| rng.random::<f32>() - 0.5).collect();
    let kernel = gaussian_kernel(spec.speckle_sigma);
    for axis in 0..3 {
        blur_axis(&mut data, dims, axis, &kernel);
    }
    let mean = data.iter().map(|&x| x as f64).sum::<f64>() / total as f64;
    let var = data.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / total as f64;
    let sd = var.sqrt().max(1e-12);

    let mut phantom = Phantom {
        dims,
        voxel_size: spec.voxel_size,
        origin: spec.min,
        data: Vec::new(),
        vessel: spec.vessel,
    };
    let mut out = Vec::with_capacity(total);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let raw = data[(z * dims[1] + y) * dims[0] + x] as f64;
                let mut val = spec.mean_intensity + spec.contrast * (raw - mean) / sd;
                if spec.vessel.contains(&phantom.voxel_center(x, y, z)) {
                    val *= spec.vessel_attenuation;
                }
                out.push(val.clamp(0.0, 255.0) as f32);
            }
        }
    }
    phantom.data = out;
    Ok(phantom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> PhantomSpec {
        PhantomSpec {
            min: Vector3::new(-8.0, -8.0, -8.0),
            max: Vector3::new(8.0, 8.0, 60.0),
            voxel_size: 0.5,
            vessel: Vessel {
                start: Vector3::new(0.0, 0.0, 0.0),
                end: Vector3::new(0.0, 0.0, 50.0),
                radius: 2.0,
            },
            seed,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn analytic_cylinder_volume() {
        let v = small_spec(0).vessel;
        let expected = std::f64::consts::PI * 4.0 * 50.0 / 1000.0;
        assert!((v.volume_ml() - expected).abs() < 1e-12);
        assert!((v.volume_ml() - 0.628).abs() < 1e-3);
        assert_eq!(v.length_mm(), 50.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = build_phantom(&small_spec(4)).unwrap();
        let b = build_phantom(&small_spec(4)).unwrap();
        assert_eq!(a.data, b.data);
        let c = build_phantom(&small_spec(5)).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn rejects_bad_vessels() {
        let mut s = small_spec(0);
        s.vessel.radius = 0.0;
        assert!(build_phantom(&s).is_err());
        let mut s = small_spec(0);
        s.vessel.end = Vector3::new(0.0, 0.0, 70.0);
        assert!(build_phantom(&s).is_err());
    }

    #[test]
    fn vessel_is_darker() {
        let p = build_phantom(&small_spec(1)).unwrap();
        let mut inside = (0.0, 0);
        let mut outside = (0.0, 0);
        for z in 0..p.dims[2] {
            for y in 0..p.dims[1] {
                for x in 0..p.dims[0] {
                    let c = p.voxel_center(x, y, z);
                    let v = p.voxel(x, y, z) as f64;
                    if p.vessel.contains(&c) {
                        inside.0 += v;
                        inside.1 += 1;
                    } else {
                        outside.0 += v;
                        outside.1 += 1;
                    }
                }
            }
        }
        assert!(inside.0 / (inside.1 as f64) < 0.5 * outside.0 / (outside.1 as f64));
    }

    #[test]
    fn sample_hits_voxels_and_zero_outside() {
        let p = build_phantom(&small_spec(2)).unwrap();
        let c = p.voxel_center(3, 4, 5);
        assert!((p.sample(&c) - p.voxel(3, 4, 5)).abs() < 1e-4);
        assert_eq!(p.sample(&Vector3::new(100.0, 0.0, 0.0)), 0.0);
    }
}
