use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{
    chain_poses,
    diff::{chain_poses_vjp, invert_pose_vjp},
    invert_pose, Pose6,
};

/// Default angle above which consecutive translations count as a reversal.
pub const DEFAULT_DIRECTION_THRESHOLD_DEG: f64 = 90.0;

/// Frames at which the scan direction reverses: `j + 1` is reported when the
/// translations of poses `j` and `j + 1` are more than `threshold_deg` apart.
/// Pairs with a zero-length translation are skipped.
pub fn detect_direction_changes(poses: &[Pose6], threshold_deg: f64) -> Result<Vec<usize>> {
    if poses.len() < 3 {
        return Err(Error::TooShort {
            what: "poses",
            min: 3,
            actual: poses.len(),
        });
    }
    let cos_thr = threshold_deg.to_radians().cos();
    Ok(poses
        .windows(2)
        .enumerate()
        .filter_map(|(j, w)| {
            let (a, b) = (w[0].translation(), w[1].translation());
            let den = a.norm() * b.norm();
            (den > 0.0 && a.dot(&b) / den < cos_thr).then_some(j + 1)
        })
        .collect())
}

/// Outcome of splitting a loop scan at its direction changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segmentation {
    /// Five contiguous frame ranges `s1..s5` covering the scan.
    Loop([std::ops::Range<usize>; 5]),
    /// The scan is not a usable five-segment loop.
    Skip(String),
}

pub fn split_segments(frames: usize, changes: &[usize]) -> Segmentation {
    if changes.len() != 4 {
        return Segmentation::Skip(format!("{} direction changes, need 4", changes.len()));
    }
    let mut b = vec![0];
    b.extend_from_slice(changes);
    b.push(frames);
    // every segment needs two frames so it carries at least one motion
    if b.windows(2).any(|w| w[1] < w[0] + 2) {
        return Segmentation::Skip(format!("degenerate segment in {changes:?}"));
    }
    Segmentation::Loop(std::array::from_fn(|i| b[i]..b[i + 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathPart {
    /// Segment index, 0 for `s1` through 4 for `s5`.
    pub segment: usize,
    pub flipped: bool,
}

/// A reordered path through the loop segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTemplate {
    pub parts: Vec<PathPart>,
}

const fn part(segment: usize, flipped: bool) -> PathPart {
    PathPart { segment, flipped }
}

impl PathTemplate {
    /// The eight reordered paths.
    pub fn all() -> Vec<PathTemplate> {
        let t = |p: &[PathPart]| PathTemplate { parts: p.to_vec() };
        vec![
            t(&[part(0, false), part(1, false), part(4, false)]),
            t(&[part(0, false), part(2, true), part(4, false)]),
            t(&[part(0, false), part(3, false), part(4, false)]),
            t(&[
                part(0, false),
                part(1, false),
                part(3, true),
                part(2, true),
                part(4, false),
            ]),
            t(&[
                part(0, false),
                part(2, true),
                part(1, true),
                part(3, false),
                part(4, false),
            ]),
            t(&[
                part(0, false),
                part(2, true),
                part(3, true),
                part(1, false),
                part(4, false),
            ]),
            t(&[
                part(0, false),
                part(3, false),
                part(1, true),
                part(2, true),
                part(4, false),
            ]),
            t(&[
                part(0, false),
                part(3, false),
                part(2, false),
                part(1, false),
                part(4, false),
            ]),
        ]
    }

    /// The original order `s1..s5`.
    pub fn identity() -> PathTemplate {
        PathTemplate {
            parts: (0..5).map(|s| part(s, false)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.iter().any(|p| p.segment >= 5) {
            return Err(Error::InvalidInput(
                "template references a missing segment".into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for PathTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .parts
            .iter()
            .map(|p| {
                if p.flipped {
                    format!("flip(s{})", p.segment + 1)
                } else {
                    format!("s{}", p.segment + 1)
                }
            })
            .collect();
        write!(f, "[{}]", names.join(", "))
    }
}

/// Frame order of a reordered path plus the positions where two frames that
/// are not neighbours in the original scan become neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reordering {
    pub order: Vec<usize>,
    /// `(frame_a, frame_b)` pairs joining consecutive path parts.
    pub junctions: Vec<(usize, usize)>,
    /// Positions in `order` of every junction frame.
    pub junction_positions: Vec<usize>,
}

pub fn reorder_sequence(
    segments: &[std::ops::Range<usize>; 5],
    template: &PathTemplate,
) -> Result<Reordering> {
    template.validate()?;
    let mut order = Vec::new();
    let mut junctions = Vec::new();
    let mut junction_positions = Vec::new();
    for p in &template.parts {
        let seg = segments[p.segment].clone();
        let frames: Vec<usize> = if p.flipped {
            seg.rev().collect()
        } else {
            seg.collect()
        };
        if let (Some(&a), Some(&b)) = (order.last(), frames.first()) {
            if a + 1 != b {
                junctions.push((a, b));
                junction_positions.push(order.len() - 1);
                junction_positions.push(order.len());
            }
        }
        order.extend(frames);
    }
    Ok(Reordering {
        order,
        junctions,
        junction_positions,
    })
}

/// Relative pose from frame `a` to frame `b` along the original frame path.
pub fn path_pose(poses: &[Pose6], a: usize, b: usize) -> Pose6 {
    use std::cmp::Ordering::*;
    match a.cmp(&b) {
        Equal => Pose6::ZERO,
        Less if b == a + 1 => poses[a],
        Less => chain_poses(&poses[a..b]),
        Greater if a == b + 1 => invert_pose(&poses[b]),
        Greater => invert_pose(&chain_poses(&poses[b..a])),
    }
}

fn path_pose_vjp(poses: &[Pose6], a: usize, b: usize, g: [f64; 6], out: &mut [[f64; 6]]) {
    let add = |out: &mut [[f64; 6]], i: usize, v: [f64; 6]| {
        for j in 0..6 {
            out[i][j] += v[j];
        }
    };
    if a < b {
        if b == a + 1 {
            add(out, a, g);
        } else {
            for (off, v) in chain_poses_vjp(&poses[a..b], g).into_iter().enumerate() {
                add(out, a + off, v);
            }
        }
    } else if a > b {
        if a == b + 1 {
            add(out, b, invert_pose_vjp(&poses[b], g));
        } else {
            let chained = chain_poses(&poses[b..a]);
            let gc = invert_pose_vjp(&chained, g);
            for (off, v) in chain_poses_vjp(&poses[b..a], gc).into_iter().enumerate() {
                add(out, b + off, v);
            }
        }
    }
}

/// Targets for the reordered sequence built from the original estimates.
pub fn reorder_targets(poses: &[Pose6], order: &[usize]) -> Vec<Pose6> {
    order.windows(2).map(|w| path_pose(poses, w[0], w[1])).collect()
}

/// Pulls gradients on the reordered targets back to the original estimates.
pub fn reorder_targets_vjp(poses: &[Pose6], order: &[usize], g: &[[f64; 6]]) -> Vec<[f64; 6]> {
    let mut out = vec![[0.0; 6]; poses.len()];
    for (w, gi) in order.windows(2).zip(g) {
        path_pose_vjp(poses, w[0], w[1], *gi, &mut out);
    }
    out
}

/// Loss value with gradients on the reordered and the original estimates.
pub type PacValue = (f64, Vec<[f64; 6]>, Vec<[f64; 6]>);

/// Mean absolute difference between the reordered-sequence estimates and the
/// reordered original estimates, with gradients on both.
pub fn pac_loss(reordered_est: &[Pose6], original_est: &[Pose6], order: &[usize]) -> Result<PacValue> {
    if reordered_est.len() + 1 != order.len() {
        return Err(Error::LengthMismatch {
            what: "reordered estimates",
            expected: order.len().saturating_sub(1),
            actual: reordered_est.len(),
        });
    }
    let targets = reorder_targets(original_est, order);
    let w = 1.0 / (6.0 * targets.len().max(1) as f64);
    let mut value = 0.0;
    let mut g_re = vec![[0.0; 6]; reordered_est.len()];
    let mut g_t = vec![[0.0; 6]; targets.len()];
    for (i, (p, t)) in reordered_est.iter().zip(&targets).enumerate() {
        let (pa, ta) = (p.to_array(), t.to_array());
        for j in 0..6 {
            let d = pa[j] - ta[j];
            value += w * d.abs();
            let sgn = if d == 0.0 { 0.0 } else { d.signum() };
            g_re[i][j] = w * sgn;
            g_t[i][j] = -w * sgn;
        }
    }
    let g_orig = reorder_targets_vjp(original_est, order, &g_t);
    Ok((value, g_re, g_orig))
}
