use serde::{Deserialize, Serialize};

use super::EstimateResult;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Pose6;
use crate::imu::relative_euler;
use crate::scan::ScanBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadReckoningConfig {
    /// Elevation step assumed for every frame pair, mm.
    pub nominal_step_mm: f64,
    /// Largest in-plane shift searched, pixels.
    pub search_radius_px: usize,
    /// Pixel subsampling of the correlation window.
    pub stride: usize,
}

impl Default for DeadReckoningConfig {
    fn default() -> Self {
        Self {
            nominal_step_mm: 0.5,
            search_radius_px: 3,
            stride: 2,
        }
    }
}

fn shifted_ncc(a: &Frame, b: &Frame, sx: isize, sy: isize, r: usize, stride: usize) -> f64 {
    let (mut sa, mut sb, mut sab, mut saa, mut sbb, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for row in (r..b.height - r).step_by(stride) {
        let ar = (row as isize + sy) as usize;
        for col in (r..b.width - r).step_by(stride) {
            let x = a.get((col as isize + sx) as usize, ar) as f64;
            let y = b.get(col, row) as f64;
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
            n += 1.0;
        }
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn parabola_offset(left: f64, mid: f64, right: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / den).clamp(-0.5, 0.5)
}

/// In-plane shift `(sx, sy)` in pixels such that `b(c) ~ a(c + s)`.
pub fn in_plane_shift(a: &Frame, b: &Frame, cfg: &DeadReckoningConfig) -> Result<(f64, f64)> {
    a.check_same_size(b)?;
    let r = cfg.search_radius_px;
    if a.width <= 2 * r + 2 || a.height <= 2 * r + 2 || cfg.stride == 0 {
        return Err(Error::InvalidInput(
            "frames too small for the shift search".into(),
        ));
    }
    let ri = r as isize;
    let side = 2 * r + 1;
    let mut scores = vec![f64::NEG_INFINITY; side * side];
    let mut best = (0isize, 0isize, f64::NEG_INFINITY);
    for sy in -ri..=ri {
        for sx in -ri..=ri {
            let s = shifted_ncc(a, b, sx, sy, r, cfg.stride);
            scores[((sy + ri) as usize) * side + (sx + ri) as usize] = s;
            // ties go to the smaller shift magnitude
            let better = s > best.2 || (s == best.2 && sx.abs() + sy.abs() < best.0.abs() + best.1.abs());
            if better {
                best = (sx, sy, s);
            }
        }
    }
    let at = |sx: isize, sy: isize| scores[((sy + ri) as usize) * side + (sx + ri) as usize];
    let (bx, by, peak) = best;
    if peak >= 1.0 - 1e-12 {
        // exact match, no sub-pixel refinement
        return Ok((bx as f64, by as f64));
    }
    let fx = if bx.abs() < ri {
        parabola_offset(at(bx - 1, by), peak, at(bx + 1, by))
    } else {
        0.0
    };
    let fy = if by.abs() < ri {
        parabola_offset(at(bx, by - 1), peak, at(bx, by + 1))
    } else {
        0.0
    };
    Ok((bx as f64 + fx, by as f64 + fy))
}

/// Rotation from the IMU's relative Euler angles, in-plane translation from
/// the correlation peak, elevation from the nominal step.
pub fn dead_reckoning_estimate(bundle: &ScanBundle, cfg: &DeadReckoningConfig) -> Result<EstimateResult> {
    bundle.validate()?;
    let phi = relative_euler(&bundle.imu)?;
    let s = bundle.meta.spacing;
    let poses = bundle
        .frames
        .windows(2)
        .zip(&phi)
        .map(|(w, e)| {
            let (sx, sy) = in_plane_shift(&w[0], &w[1], cfg)?;
            Ok(Pose6 {
                tx: sx * s,
                ty: sy * s,
                tz: cfg.nominal_step_mm,
                rotation: *e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateResult { poses })
}
