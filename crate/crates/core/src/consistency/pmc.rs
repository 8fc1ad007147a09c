use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{in_plane_shift, DeadReckoningConfig};
use crate::frame::Frame;
use crate::geometry::{diff::pose_to_matrix_vjp, pose_to_matrix, ImagePlane, Pose6};

/// Default number of interpolated frames between an image pair.
pub const DEFAULT_INTERPOLATED: usize = 63;
/// Default patch grid (rows, columns).
pub const DEFAULT_PATCH_GRID: (usize, usize) = (32, 32);

/// Generates intermediate frames between two images.
pub trait Interpolator {
    /// `count` frames strictly between `a` and `b`.
    fn interpolate(&self, a: &Frame, b: &Frame, count: usize) -> Result<Vec<Frame>>;
}

/// Pixel-wise cross-fade `(1 - w) a + w b` with `w = t / (count + 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearInterpolator;

impl Interpolator for LinearInterpolator {
    fn interpolate(&self, a: &Frame, b: &Frame, count: usize) -> Result<Vec<Frame>> {
        a.check_same_size(b)?;
        Ok((1..=count)
            .map(|t| {
                let w = t as f64 / (count + 1) as f64;
                let data = a
                    .data
                    .iter()
                    .zip(&b.data)
                    .map(|(&x, &y)| ((1.0 - w) * x as f64 + w * y as f64) as f32)
                    .collect();
                Frame {
                    width: a.width,
                    height: a.height,
                    data,
                }
            })
            .collect())
    }
}

/// Translation-only warp: the in-plane shift between the endpoints is found by
/// correlation, each intermediate frame cross-fades the two endpoints after
/// moving them part of the way along that shift.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowWarpInterpolator {
    pub search: DeadReckoningConfig,
}

impl Interpolator for FlowWarpInterpolator {
    fn interpolate(&self, a: &Frame, b: &Frame, count: usize) -> Result<Vec<Frame>> {
        a.check_same_size(b)?;
        // b(c) ~ a(c + s)
        let (sx, sy) = in_plane_shift(a, b, &self.search)?;
        Ok((1..=count)
            .map(|t| {
                let w = t as f64 / (count + 1) as f64;
                let mut f = Frame::filled(a.width, a.height, 0.0);
                for row in 0..a.height {
                    for col in 0..a.width {
                        let (x, y) = (col as f64, row as f64);
                        let va = a.sample_clamped(x + w * sx, y + w * sy);
                        let vb = b.sample_clamped(x - (1.0 - w) * sx, y - (1.0 - w) * sy);
                        f.set(col, row, ((1.0 - w) * va + w * vb) as f32);
                    }
                }
                f
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolatorKind {
    #[default]
    Linear,
    FlowWarp,
}

pub fn interpolate_images(a: &Frame, b: &Frame, count: usize, kind: InterpolatorKind) -> Result<Vec<Frame>> {
    match kind {
        InterpolatorKind::Linear => LinearInterpolator.interpolate(a, b, count),
        InterpolatorKind::FlowWarp => FlowWarpInterpolator::default().interpolate(a, b, count),
    }
}

/// Patch layout over the edge-padded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch_w: usize,
    pub patch_h: usize,
}

impl PatchGrid {
    /// Pads `width x height` up to multiples of the grid.
    pub fn new(width: usize, height: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidInput("empty patch grid or image".into()));
        }
        Ok(Self {
            rows,
            cols,
            patch_w: width.div_ceil(cols),
            patch_h: height.div_ceil(rows),
        })
    }

    pub fn padded_size(&self) -> (usize, usize) {
        (self.patch_w * self.cols, self.patch_h * self.rows)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Corner and center sample positions of every patch, in local frame
    /// coordinates, row-major over patches.
    pub fn sample_points(&self, plane: &ImagePlane) -> Vec<[Vector3<f64>; 5]> {
        let mut out = Vec::with_capacity(self.len());
        for p in 0..self.rows {
            for q in 0..self.cols {
                let (u0, u1) = ((q * self.patch_w) as f64, ((q + 1) * self.patch_w) as f64);
                let (v0, v1) = ((p * self.patch_h) as f64, ((p + 1) * self.patch_h) as f64);
                out.push([
                    plane.local_point(u0, v0),
                    plane.local_point(u1, v0),
                    plane.local_point(u0, v1),
                    plane.local_point(u1, v1),
                    plane.local_point(0.5 * (u0 + u1), 0.5 * (v0 + v1)),
                ]);
            }
        }
        out
    }

    fn patch_sums(&self, padded: &Frame, other: Option<&Frame>) -> Vec<f64> {
        let mut sums = vec![0.0; self.len()];
        for row in 0..padded.height {
            let p = row / self.patch_h;
            for col in 0..padded.width {
                let q = col / self.patch_w;
                let v = match other {
                    Some(o) => (padded.get(col, row) - o.get(col, row)).abs() as f64,
                    None => padded.get(col, row) as f64,
                };
                sums[p * self.cols + q] += v;
            }
        }
        sums
    }
}

/// Per-patch L1 content change along the interpolated path from `a` to `b`,
/// endpoints included.
pub fn patch_content_difference(
    a: &Frame,
    b: &Frame,
    count: usize,
    grid: &PatchGrid,
    interp: &dyn Interpolator,
) -> Result<Vec<f64>> {
    a.check_same_size(b)?;
    let (pw, ph) = grid.padded_size();
    let mut path = vec![a.clone()];
    path.extend(interp.interpolate(a, b, count)?);
    path.push(b.clone());
    let padded: Vec<Frame> = path.iter().map(|f| f.padded(pw, ph)).collect();
    let mut c = vec![0.0; grid.len()];
    for w in padded.windows(2) {
        for (acc, v) in c.iter_mut().zip(grid.patch_sums(&w[0], Some(&w[1]))) {
            *acc += v;
        }
    }
    Ok(c)
}

/// Closed form of [`patch_content_difference`] for the linear cross-fade: the
/// path sum telescopes to the endpoint difference.
pub fn patch_content_difference_linear(a: &Frame, b: &Frame, grid: &PatchGrid) -> Result<Vec<f64>> {
    a.check_same_size(b)?;
    let (pw, ph) = grid.padded_size();
    Ok(grid.patch_sums(&a.padded(pw, ph), Some(&b.padded(pw, ph))))
}

/// Mean displacement of each patch's sample points under the relative pose
/// taking frame `i` to frame `j`.
pub fn patch_3d_distance(rel: &Pose6, points: &[[Vector3<f64>; 5]]) -> Vec<f64> {
    let t = pose_to_matrix(rel);
    let (r, tr) = (t.rotation().0, t.translation());
    let m = r - Matrix3::identity();
    points
        .iter()
        .map(|pts| pts.iter().map(|p| (m * p + tr).norm()).sum::<f64>() / 5.0)
        .collect()
}

/// Gradient of `sum_b g_b d_b` with respect to the relative pose.
pub fn patch_3d_distance_vjp(rel: &Pose6, points: &[[Vector3<f64>; 5]], g: &[f64]) -> [f64; 6] {
    let t = pose_to_matrix(rel);
    let (r, tr) = (t.rotation().0, t.translation());
    let m = r - Matrix3::identity();
    let mut g_r = Matrix3::zeros();
    let mut g_t = Vector3::zeros();
    for (pts, &gb) in points.iter().zip(g) {
        if gb == 0.0 {
            continue;
        }
        for p in pts {
            let v = m * p + tr;
            let n = v.norm();
            if n == 0.0 {
                continue;
            }
            let u = v * (gb / (5.0 * n));
            g_r += u * p.transpose();
            g_t += u;
        }
    }
    let mut g4 = Matrix4::zeros();
    g4.fixed_view_mut::<3, 3>(0, 0).copy_from(&g_r);
    g4.fixed_view_mut::<3, 1>(0, 3).copy_from(&g_t);
    pose_to_matrix_vjp(rel, &g4)
}

/// z-scored L1 between content changes `c` and distances `d`, pooled over
/// the whole set. Returns the loss, its gradient on `d`, and a flag set when
/// either set is constant (loss and gradient are then zero).
pub fn pmc_from_values(c: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
    if c.len() != d.len() {
        return Err(Error::LengthMismatch {
            what: "patch distances",
            expected: c.len(),
            actual: d.len(),
        });
    }
    let n = c.len();
    if n == 0 {
        return Ok((0.0, Vec::new(), true));
    }
    let stats = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / n as f64;
        let s = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        (m, s)
    };
    let (mc, sc) = stats(c);
    let (md, sd) = stats(d);
    // relative guards: spread below rounding noise of the values counts as constant
    let tiny = |s: f64, m: f64| s <= 1e-12 * m.abs().max(1.0);
    if tiny(sc, mc) || tiny(sd, md) {
        return Ok((0.0, vec![0.0; n], true));
    }
    let zc: Vec<f64> = c.iter().map(|v| (v - mc) / sc).collect();
    let zd: Vec<f64> = d.iter().map(|v| (v - md) / sd).collect();
    let mut value = 0.0;
    let mut g = vec![0.0; n];
    for b in 0..n {
        let diff = zc[b] - zd[b];
        value += diff.abs() / n as f64;
        let sgn = if diff == 0.0 { 0.0 } else { diff.signum() };
        g[b] = -sgn / n as f64;
    }
    let mean_g = g.iter().sum::<f64>() / n as f64;
    let mean_gz = g.iter().zip(&zd).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gd = g
        .iter()
        .zip(&zd)
        .map(|(gb, z)| (gb - mean_g - z * mean_gz) / sd)
        .collect();
    Ok((value, gd, false))
}

/// Content changes for a set of frame pairs, concatenated pair-major.
pub fn pair_content_differences(
    frames: &[Frame],
    pairs: &[(usize, usize)],
    count: usize,
    grid: &PatchGrid,
    kind: InterpolatorKind,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len() * grid.len());
    for &(i, j) in pairs {
        let (a, b) = (
            frames.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: frames.len(),
            })?,
            frames.get(j).ok_or(Error::IndexOutOfRange {
                index: j,
                len: frames.len(),
            })?,
        );
        let c = match kind {
            InterpolatorKind::Linear => patch_content_difference_linear(a, b, grid)?,
            InterpolatorKind::FlowWarp => {
                patch_content_difference(a, b, count, grid, &FlowWarpInterpolator::default())?
            }
        };
        out.extend(c);
    }
    Ok(out)
}

/// Loss over pairs with relative poses `rel[p]`; returns the value, the
/// gradient per pair pose and the degenerate flag.
pub fn pmc_loss(
    c: &[f64],
    rel: &[Pose6],
    points: &[[Vector3<f64>; 5]],
) -> Result<(f64, Vec<[f64; 6]>, bool)> {
    let nb = points.len();
    let d: Vec<f64> = rel.iter().flat_map(|p| patch_3d_distance(p, points)).collect();
    let (value, gd, degenerate) = pmc_from_values(c, &d)?;
    let grads = if degenerate {
        vec![[0.0; 6]; rel.len()]
    } else {
        rel.iter()
            .enumerate()
            .map(|(p, pose)| patch_3d_distance_vjp(pose, points, &gd[p * nb..(p + 1) * nb]))
            .collect()
    };
    Ok((value, grads, degenerate))
}
