use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::EulerAngles;
use crate::imu::{relative_euler_from_orientations, ImuSeries};

/// Cells per side of the coarse difference grid.
pub const GRID: usize = 4;
/// Grid cells plus the global NCC.
pub const FEATURE_DIM: usize = GRID * GRID + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures {
    /// Row-major mean absolute differences per cell, scaled to `[0, 1]`.
    pub grid: [f64; GRID * GRID],
    pub ncc: f64,
}

impl PairFeatures {
    pub fn to_vector(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..GRID * GRID].copy_from_slice(&self.grid);
        out[GRID * GRID] = self.ncc;
        out
    }
}

/// Normalized cross-correlation of two equal-size images. Two constant images
/// correlate 1 when equal and 0 otherwise.
pub fn ncc(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_size(b)?;
    let (ma, mb) = (a.mean(), b.mean());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(if a.data == b.data { 1.0 } else { 0.0 });
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn extract_pair_features(a: &Frame, b: &Frame) -> Result<PairFeatures> {
    a.check_same_size(b)?;
    if a.width < GRID || a.height < GRID {
        return Err(Error::InvalidInput(format!(
            "frames must be at least {GRID}x{GRID} pixels"
        )));
    }
    let mut sums = [0.0f64; GRID * GRID];
    let mut counts = [0usize; GRID * GRID];
    for row in 0..a.height {
        let gy = row * GRID / a.height;
        for col in 0..a.width {
            let gx = col * GRID / a.width;
            let k = gy * GRID + gx;
            sums[k] += (a.get(col, row) - b.get(col, row)).abs() as f64;
            counts[k] += 1;
        }
    }
    let mut grid = [0.0; GRID * GRID];
    for k in 0..GRID * GRID {
        grid[k] = sums[k] / counts[k] as f64 / 255.0;
    }
    Ok(PairFeatures {
        grid,
        ncc: ncc(a, b)?,
    })
}

/// Memoized pair features over one frame stack. Features are symmetric in the
/// pair order, so `(i, j)` and `(j, i)` share an entry.
#[derive(Debug)]
pub struct FeatureCache<'a> {
    frames: &'a [Frame],
    map: HashMap<(usize, usize), [f64; FEATURE_DIM]>,
}

impl<'a> FeatureCache<'a> {
    pub fn new(frames: &'a [Frame]) -> Self {
        Self {
            frames,
            map: HashMap::new(),
        }
    }

    pub fn frames(&self) -> &'a [Frame] {
        self.frames
    }

    pub fn get(&mut self, i: usize, j: usize) -> Result<[f64; FEATURE_DIM]> {
        let n = self.frames.len();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        let key = (i.min(j), i.max(j));
        if let Some(f) = self.map.get(&key) {
            return Ok(*f);
        }
        let f = extract_pair_features(&self.frames[key.0], &self.frames[key.1])?.to_vector();
        self.map.insert(key, f);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Everything the fusion model reads for one frame sequence of length `n >= 2`:
/// `n - 1` pair features and relative Euler angles, `n - 2` accelerations for
/// the interior frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub accel: Vec<Vector3<f64>>,
    pub euler: Vec<EulerAngles>,
}

impl SequenceInput {
    /// Number of frame pairs.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.features.len();
        if m < 1 {
            return Err(Error::TooShort {
                what: "frames",
                min: 2,
                actual: m + 1,
            });
        }
        if self.euler.len() != m {
            return Err(Error::LengthMismatch {
                what: "relative Euler angles",
                expected: m,
                actual: self.euler.len(),
            });
        }
        if self.accel.len() + 1 != m {
            return Err(Error::LengthMismatch {
                what: "interior accelerations",
                expected: m - 1,
                actual: self.accel.len(),
            });
        }
        Ok(())
    }
}

/// Options for assembling a [`SequenceInput`] from a subset of frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputOptions {
    /// Multiplier converting per-source-frame accelerations to the sequence's
    /// frame interval (`k^2` for every `k`-th frame).
    pub accel_factor: f64,
}

impl Default for InputOptions {
    fn default() -> Self {
        Self { accel_factor: 1.0 }
    }
}

/// Builds model inputs for the frames at `indices` (in that order). Frames
/// listed in `zero_accel` (positions within `indices`) get zero acceleration.
pub fn sequence_input(
    cache: &mut FeatureCache<'_>,
    imu: &ImuSeries,
    indices: &[usize],
    opts: InputOptions,
    zero_accel: &[usize],
) -> Result<SequenceInput> {
    if indices.len() < 2 {
        return Err(Error::TooShort {
            what: "frames",
            min: 2,
            actual: indices.len(),
        });
    }
    if imu.len() != cache.frames().len() {
        return Err(Error::LengthMismatch {
            what: "imu samples",
            expected: cache.frames().len(),
            actual: imu.len(),
        });
    }
    let features = indices
        .windows(2)
        .map(|w| cache.get(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let sub = imu.select(indices);
    let o: Vec<EulerAngles> = sub.samples.iter().map(|s| s.orientation).collect();
    let euler = relative_euler_from_orientations(&o)?;
    let a = crate::imu::preprocess_acceleration(&sub);
    let n = indices.len();
    let accel = (1..n - 1)
        .map(|p| {
            if zero_accel.contains(&p) {
                Vector3::zeros()
            } else {
                a[p] * opts.accel_factor
            }
        })
        .collect();
    Ok(SequenceInput {
        features,
        accel,
        euler,
    })
}
