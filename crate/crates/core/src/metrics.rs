//! Trajectory drift and angle metrics, plus direction-change detection quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{accumulate_trajectory, angle_diff, pose_to_matrix, Pose6, Trajectory, ELEVATION_AXIS};

/// Path lengths below this are flagged as near-degenerate.
pub const SHORT_PATH_MM: f64 = 1e-6;

fn check_pair(est: &Trajectory, gt: &Trajectory) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated trajectory",
            expected: gt.len(),
            actual: est.len(),
        });
    }
    if gt.len() < 2 {
        return Err(Error::TooShort {
            what: "trajectory frames",
            min: 2,
            actual: gt.len(),
        });
    }
    Ok(())
}

fn drifts(est: &Trajectory, gt: &Trajectory) -> Vec<f64> {
    est.positions
        .iter()
        .zip(&gt.positions)
        .map(|(a, b)| (a - b).norm())
        .collect()
}

/// Final drift over ground-truth path length.
pub fn fdr(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    let len = gt.path_length();
    if len == 0.0 {
        return Err(Error::Degenerate("ground-truth path has zero length".into()));
    }
    let n = gt.len() - 1;
    Ok((est.positions[n] - gt.positions[n]).norm() / len)
}

/// Mean over frames `1..N` of the drift divided by the ground-truth path
/// length up to that frame.
pub fn adr(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    let d = drifts(est, gt);
    let mut prefix = 0.0;
    let mut acc = 0.0;
    for (i, di) in d.iter().enumerate().skip(1) {
        prefix += (gt.positions[i] - gt.positions[i - 1]).norm();
        if prefix == 0.0 {
            return Err(Error::Degenerate(format!("zero path length up to frame {i}")));
        }
        if prefix < SHORT_PATH_MM {
            log::warn!("path length {prefix:e} mm up to frame {i} is nearly zero");
        }
        acc += di / prefix;
    }
    Ok(acc / (gt.len() - 1) as f64)
}

/// Largest index-matched drift.
pub fn md(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    Ok(drifts(est, gt).into_iter().fold(0.0, f64::max))
}

/// Sum of index-matched drifts.
pub fn sd(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    Ok(drifts(est, gt).into_iter().sum())
}

/// Symmetric Hausdorff distance between the two position sets.
pub fn hd(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_pair(est, gt)?;
    let directed = |a: &Trajectory, b: &Trajectory| {
        a.positions
            .iter()
            .map(|p| {
                b.positions
                    .iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(est, gt).max(directed(gt, est)))
}

fn check_poses(est: &[Pose6], gt: &[Pose6]) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated poses",
            expected: gt.len(),
            actual: est.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty pose sequences".into()));
    }
    Ok(())
}

/// Mean shortest-arc absolute Euler difference over axes and poses, degrees.
pub fn mea(est: &[Pose6], gt: &[Pose6]) -> Result<f64> {
    check_poses(est, gt)?;
    let mut acc = 0.0;
    for (a, b) in est.iter().zip(gt) {
        for (x, y) in a.rotation.to_array().iter().zip(b.rotation.to_array()) {
            acc += angle_diff(*x, y).abs();
        }
    }
    Ok(acc / (3 * est.len()) as f64)
}

/// Per-pose in-plane (mm), out-of-plane (mm) and dihedral (deg) errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaneErrors {
    pub inplane: Vec<f64>,
    pub outplane: Vec<f64>,
    pub dihedral: Vec<f64>,
}

pub fn plane_errors(est: &[Pose6], gt: &[Pose6]) -> Result<PlaneErrors> {
    check_poses(est, gt)?;
    let mut out = PlaneErrors {
        inplane: Vec::with_capacity(est.len()),
        outplane: Vec::with_capacity(est.len()),
        dihedral: Vec::with_capacity(est.len()),
    };
    for (a, b) in est.iter().zip(gt) {
        out.inplane.push((a.tx - b.tx).hypot(a.ty - b.ty));
        out.outplane.push((a.tz - b.tz).abs());
        let na = pose_to_matrix(a).rotation().0 * ELEVATION_AXIS;
        let nb = pose_to_matrix(b).rotation().0 * ELEVATION_AXIS;
        // atan2 form stays exact near parallel normals where acos loses precision
        out.dihedral.push(
            na.cross(&nb)
                .norm()
                .atan2(na.dot(&nb).clamp(-1.0, 1.0))
                .to_degrees(),
        );
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    crate::stats::mean(v)
}

/// All metrics for one estimated/ground-truth pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Final drift rate, percent.
    pub fdr: f64,
    /// Average drift rate, percent.
    pub adr: f64,
    pub md: f64,
    pub sd: f64,
    pub hd: f64,
    pub mea: f64,
    pub inplane_mean: f64,
    pub outplane_mean: f64,
    pub dihedral_mean: f64,
    pub per_frame: PlaneErrors,
}

impl MetricReport {
    pub fn compute(est: &[Pose6], gt: &[Pose6]) -> Result<Self> {
        check_poses(est, gt)?;
        let te = accumulate_trajectory(est);
        let tg = accumulate_trajectory(gt);
        let pe = plane_errors(est, gt)?;
        Ok(Self {
            fdr: 100.0 * fdr(&te, &tg)?,
            adr: 100.0 * adr(&te, &tg)?,
            md: md(&te, &tg)?,
            sd: sd(&te, &tg)?,
            hd: hd(&te, &tg)?,
            mea: mea(est, gt)?,
            inplane_mean: mean(&pe.inplane),
            outplane_mean: mean(&pe.outplane),
            dihedral_mean: mean(&pe.dihedral),
            per_frame: pe,
        })
    }
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Order-preserving assignment of every element of the smaller set to a
/// distinct element of the larger one, minimizing the summed absolute index
/// difference. Returns `(small_value, large_value)` pairs; ties prefer the
/// earlier element of the larger set.
pub fn match_indices(a: &[usize], b: &[usize]) -> Vec<(usize, usize)> {
    let (a, b) = (sorted_unique(a), sorted_unique(b));
    let swapped = a.len() > b.len();
    let (s, l) = if swapped { (&b, &a) } else { (&a, &b) };
    let (m, n) = (s.len(), l.len());
    if m == 0 {
        return Vec::new();
    }
    // cost[i][j]: best cost matching s[..i] into l[..j]
    let inf = u64::MAX / 4;
    let mut cost = vec![vec![inf; n + 1]; m + 1];
    for c in cost[0].iter_mut() {
        *c = 0;
    }
    for i in 1..=m {
        for j in i..=n {
            let take = cost[i - 1][j - 1] + s[i - 1].abs_diff(l[j - 1]) as u64;
            let skip = cost[i][j - 1];
            cost[i][j] = take.min(skip);
        }
    }
    let mut pairs = Vec::with_capacity(m);
    let (mut i, mut j) = (m, n);
    while i > 0 {
        let take = cost[i - 1][j - 1] + s[i - 1].abs_diff(l[j - 1]) as u64;
        // prefer skipping the later element so ties land on smaller indices
        if j > i && cost[i][j - 1] <= take {
            j -= 1;
        } else {
            pairs.push((s[i - 1], l[j - 1]));
            i -= 1;
            j -= 1;
        }
    }
    pairs.reverse();
    if swapped {
        pairs.iter().map(|&(x, y)| (y, x)).collect()
    } else {
        pairs
    }
}

/// Total absolute index difference of the optimal matching.
pub fn matching_cost(a: &[usize], b: &[usize]) -> u64 {
    match_indices(a, b)
        .iter()
        .map(|&(x, y)| x.abs_diff(y) as u64)
        .sum()
}

/// Number of matched detections within `k` frames of their reference.
pub fn tp_k(truth: &[usize], detected: &[usize], k: usize) -> usize {
    match_indices(truth, detected)
        .iter()
        .filter(|&&(x, y)| x.abs_diff(y) <= k)
        .count()
}

/// Precision, recall and F1 at tolerance `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub k: usize,
    pub tp: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No detections: precision reported as 0.
    pub precision_undefined: bool,
    /// No reference changes: recall reported as 0.
    pub recall_undefined: bool,
}

pub fn detection_scores(truth: &[usize], detected: &[usize], k: usize) -> DetectionScores {
    let (t, d) = (sorted_unique(truth), sorted_unique(detected));
    let tp = tp_k(&t, &d, k);
    let precision = if d.is_empty() {
        0.0
    } else {
        tp as f64 / d.len() as f64
    };
    let recall = if t.is_empty() {
        0.0
    } else {
        tp as f64 / t.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScores {
        k,
        tp,
        precision,
        recall,
        f1,
        precision_undefined: d.is_empty(),
        recall_undefined: t.is_empty(),
    }
}

pub fn precision_k(truth: &[usize], detected: &[usize], k: usize) -> f64 {
    detection_scores(truth, detected, k).precision
}

pub fn recall_k(truth: &[usize], detected: &[usize], k: usize) -> f64 {
    detection_scores(truth, detected, k).recall
}

pub fn f1_k(truth: &[usize], detected: &[usize], k: usize) -> f64 {
    detection_scores(truth, detected, k).f1
}

/// Scores for `k = 0..=k_max`.
pub fn pr_curve(truth: &[usize], detected: &[usize], k_max: usize) -> Vec<DetectionScores> {
    (0..=k_max)
        .map(|k| detection_scores(truth, detected, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotationMatrix;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(points: &[[f64; 3]]) -> Trajectory {
        Trajectory {
            positions: points.iter().map(|p| Vector3::from(*p)).collect(),
            rotations: vec![RotationMatrix::identity(); points.len()],
        }
    }

    fn random_traj(n: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let mut p = Vector3::zeros();
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                if i > 0 {
                    p += Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                }
                [p.x, p.y, p.z]
            })
            .collect();
        traj(&pts)
    }

    #[test]
    fn drift_rates_by_hand() {
        let gt = traj(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]);
        let est = traj(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 2.5]]);
        assert!((fdr(&est, &gt).unwrap() - 0.25).abs() < 1e-15);
        assert!((adr(&est, &gt).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(fdr(&gt, &gt).unwrap(), 0.0);
        let s = |t: &Trajectory| t.scaled(2.0);
        assert!((fdr(&s(&est), &s(&gt)).unwrap() - 0.25).abs() < 1e-15);
        assert!((adr(&s(&est), &s(&gt)).unwrap() - 0.125).abs() < 1e-15);
        let still = traj(&[[0.0; 3], [0.0; 3], [0.0, 0.0, 1.0]]);
        assert!(fdr(&still, &traj(&[[0.0; 3]; 3])).is_err());
        assert!(adr(&still, &still).is_err());
    }

    #[test]
    fn adr_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let gt = random_traj(12, &mut rng);
            let est = random_traj(12, &mut rng);
            let mut want = 0.0;
            for i in 1..12 {
                let mut len = 0.0;
                for k in 0..i {
                    len += (gt.positions[k + 1] - gt.positions[k]).norm();
                }
                want += (est.positions[i] - gt.positions[i]).norm() / len;
            }
            want /= 11.0;
            assert!((adr(&est, &gt).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn md_sd_hd_single_offset() {
        let gt = traj(&[[0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.0, 2.0], [0.0, 0.0, 3.0]]);
        let mut est = gt.clone();
        est.positions[1].x += 3.0;
        assert_eq!(md(&est, &gt).unwrap(), 3.0);
        assert_eq!(sd(&est, &gt).unwrap(), 3.0);
        let h = hd(&est, &gt).unwrap();
        assert!(h <= 3.0);
        assert!((h - 3.0).abs() < 1e-12);
        // swapped positions: index drift, no set distance
        let mut est = gt.clone();
        est.positions.swap(1, 2);
        assert_eq!(md(&est, &gt).unwrap(), 1.0);
        assert_eq!(hd(&est, &gt).unwrap(), 0.0);
    }

    #[test]
    fn hd_matches_brute_force_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let a = random_traj(9, &mut rng);
            let b = random_traj(9, &mut rng);
            let mut want: f64 = 0.0;
            for (x, y) in [(&a, &b), (&b, &a)] {
                for p in &x.positions {
                    let mut best = f64::INFINITY;
                    for q in &y.positions {
                        best = best.min((p - q).norm());
                    }
                    want = want.max(best);
                }
            }
            let h = hd(&a, &b).unwrap();
            assert_eq!(h, want);
            assert!(h <= md(&a, &b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn mea_cases() {
        let a = vec![Pose6::new(0.0, 0.0, 0.0, 10.0, 5.0, -3.0); 4];
        assert_eq!(mea(&a, &a).unwrap(), 0.0);
        let b: Vec<Pose6> = a
            .iter()
            .map(|p| {
                let mut q = *p;
                q.rotation.ry += 2.0;
                q
            })
            .collect();
        assert!((mea(&b, &a).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let w1 = [Pose6::new(0.0, 0.0, 0.0, 179.0, 0.0, 0.0)];
        let w2 = [Pose6::new(0.0, 0.0, 0.0, -179.0, 0.0, 0.0)];
        assert!((mea(&w1, &w2).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn plane_error_cases() {
        let gt = vec![Pose6::new(1.0, 2.0, 0.5, 3.0, -2.0, 1.0)];
        let mut est = gt.clone();
        est[0].tx += 3.0;
        est[0].ty += 4.0;
        let e = plane_errors(&est, &gt).unwrap();
        assert_eq!(e.inplane, vec![5.0]);
        assert_eq!(e.outplane, vec![0.0]);
        assert_eq!(e.dihedral, vec![0.0]);
        let e = plane_errors(&gt, &gt).unwrap();
        assert!(e.dihedral.iter().all(|d| d.is_finite() && *d == 0.0));
        let tilt = vec![Pose6::new(0.0, 0.0, 0.0, 30.0, 0.0, 0.0)];
        let e = plane_errors(&tilt, &[Pose6::ZERO]).unwrap();
        assert!((e.dihedral[0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn report_is_zero_for_identical() {
        let gt: Vec<Pose6> = (0..10)
            .map(|i| Pose6::new(0.1, 0.0, 0.5, 0.2 * i as f64, 0.0, 1.0))
            .collect();
        let r = MetricReport::compute(&gt, &gt).unwrap();
        for v in [
            r.fdr,
            r.adr,
            r.md,
            r.sd,
            r.hd,
            r.mea,
            r.inplane_mean,
            r.outplane_mean,
            r.dihedral_mean,
        ] {
            assert_eq!(v, 0.0);
        }
    }

    fn brute_force_cost(a: &[usize], b: &[usize]) -> u64 {
        let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        fn go(s: &[usize], l: &[usize], used: &mut Vec<bool>) -> u64 {
            let Some((&first, rest)) = s.split_first() else {
                return 0;
            };
            let mut best = u64::MAX;
            for j in 0..l.len() {
                if !used[j] {
                    used[j] = true;
                    let c = first.abs_diff(l[j]) as u64 + go(rest, l, used);
                    best = best.min(c);
                    used[j] = false;
                }
            }
            best
        }
        go(s, l, &mut vec![false; l.len()])
    }

    #[test]
    fn matching_examples() {
        assert_eq!(tp_k(&[10], &[12], 1), 0);
        assert_eq!(tp_k(&[10], &[12], 2), 1);
        let s = [3, 9, 15];
        for k in 0..4 {
            let d = detection_scores(&s, &s, k);
            assert_eq!((d.precision, d.recall, d.f1), (1.0, 1.0, 1.0));
        }
        let d = detection_scores(&s, &[], 3);
        assert!(d.precision_undefined && d.precision == 0.0 && d.f1 == 0.0);
        let d = detection_scores(&[], &s, 3);
        assert!(d.recall_undefined && d.recall == 0.0);
        // ties go to the earlier candidate
        assert_eq!(match_indices(&[5], &[4, 6]), vec![(5, 4)]);
    }

    #[test]
    fn dp_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..400 {
            let na = rng.random_range(0..=6);
            let nb = rng.random_range(0..=6);
            let pick = |n: usize, rng: &mut ChaCha8Rng| {
                rand::seq::index::sample(rng, 20, n)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect::<Vec<_>>()
            };
            let a = pick(na, &mut rng);
            let b = pick(nb, &mut rng);
            assert_eq!(matching_cost(&a, &b), brute_force_cost(&a, &b), "{a:?} {b:?}");
            let curve = pr_curve(&a, &b, 20);
            for w in curve.windows(2) {
                assert!(w[1].precision >= w[0].precision);
                assert!(w[1].recall >= w[0].recall);
                assert!(w[1].f1 >= w[0].f1);
            }
        }
    }
}
