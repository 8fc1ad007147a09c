use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{chain_poses, invert_pose, Pose6};
use crate::scan::ScanBundle;

/// Largest frame interval accepted by [`Augmentation::Interval`].
pub const DEFAULT_MAX_INTERVAL: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    /// Contiguous window of `len` frames at a seeded random start.
    Subsequence { len: usize },
    /// Every `k`-th frame, starting at frame 0.
    Interval { k: usize },
    /// Reversed frame order.
    Invert,
}

fn check_len(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::TooShort {
            what: "augmented frames",
            min: 3,
            actual: n,
        });
    }
    Ok(())
}

/// Derives a new bundle whose frames, IMU samples, masks and ground truth stay
/// mutually consistent.
pub fn augment(bundle: &ScanBundle, op: Augmentation, seed: u64) -> Result<ScanBundle> {
    bundle.validate()?;
    let n = bundle.len();
    match op {
        Augmentation::Subsequence { len } => {
            check_len(len)?;
            if len > n {
                return Err(Error::InvalidInput(format!(
                    "subsequence of {len} frames from a {n}-frame scan"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = rng.random_range(0..=n - len);
            let idx: Vec<usize> = (start..start + len).collect();
            let mut out = bundle.select_frames(&idx);
            out.gt_poses = bundle
                .gt_poses
                .as_ref()
                .map(|p| p[start..start + len - 1].to_vec());
            out.meta.direction_changes = bundle
                .meta
                .direction_changes
                .iter()
                .filter(|&&c| c > start && c < start + len - 1)
                .map(|&c| c - start)
                .collect();
            Ok(out)
        }
        Augmentation::Interval { k } => {
            if !(1..=DEFAULT_MAX_INTERVAL).contains(&k) {
                return Err(Error::InvalidInput(format!(
                    "interval {k} outside 1..={DEFAULT_MAX_INTERVAL}"
                )));
            }
            if k == 1 {
                return Ok(bundle.clone());
            }
            let idx: Vec<usize> = (0..n).step_by(k).collect();
            check_len(idx.len())?;
            let mut out = bundle.select_frames(&idx);
            // one new frame spans k old ones: per-frame^2 quantities scale by k^2
            let s = (k * k) as f64;
            for sample in &mut out.imu.samples {
                sample.acceleration *= s;
                sample.gravity *= s;
            }
            out.imu.dt = bundle.imu.dt * k as f64;
            out.meta.dt = bundle.meta.dt * k as f64;
            out.gt_poses = bundle
                .gt_poses
                .as_ref()
                .map(|p| idx.windows(2).map(|w| chain_poses(&p[w[0]..w[1]])).collect());
            Ok(out)
        }
        Augmentation::Invert => {
            check_len(n)?;
            let idx: Vec<usize> = (0..n).rev().collect();
            let mut out = bundle.select_frames(&idx);
            out.gt_poses = bundle
                .gt_poses
                .as_ref()
                .map(|p| p.iter().rev().map(invert_pose).collect::<Vec<Pose6>>());
            out.meta.direction_changes = bundle
                .meta
                .direction_changes
                .iter()
                .rev()
                .map(|&c| n - 1 - c)
                .collect();
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compose_poses, pose_to_matrix};
    use crate::simulator::{build_phantom, simulate_with_phantom, PhantomSpec, ScanSpec, Tactic, Vessel};
    use nalgebra::Vector3;

    fn bundle() -> ScanBundle {
        let p = build_phantom(&PhantomSpec {
            min: Vector3::new(-10.0, -10.0, -4.0),
            max: Vector3::new(10.0, 10.0, 30.0),
            vessel: Vessel {
                start: Vector3::new(0.0, 0.0, -1.0),
                end: Vector3::new(0.0, 0.0, 26.0),
                radius: 1.5,
            },
            ..PhantomSpec::default()
        })
        .unwrap();
        let mut s = ScanSpec::new(Tactic::Curved, 21, 4).with_image(24, 24, 0.5);
        s.trajectory.wobble_deg = 2.0;
        simulate_with_phantom(&p, &s).unwrap()
    }

    #[test]
    fn interval_one_is_identity() {
        let b = bundle();
        assert_eq!(augment(&b, Augmentation::Interval { k: 1 }, 0).unwrap(), b);
    }

    #[test]
    fn invert_is_involution() {
        let b = bundle();
        let once = augment(&b, Augmentation::Invert, 0).unwrap();
        let twice = augment(&once, Augmentation::Invert, 0).unwrap();
        assert_eq!(twice.frames, b.frames);
        assert_eq!(twice.imu, b.imu);
        for (x, y) in twice
            .ground_truth()
            .unwrap()
            .iter()
            .zip(b.ground_truth().unwrap())
        {
            let d = pose_to_matrix(x).0 - pose_to_matrix(y).0;
            assert!(d.amax() < 1e-9);
        }
    }

    #[test]
    fn interval_two_composes_pairs() {
        let b = bundle();
        let a = augment(&b, Augmentation::Interval { k: 2 }, 0).unwrap();
        let gt = b.ground_truth().unwrap();
        let ga = a.ground_truth().unwrap();
        assert_eq!(a.len(), 11);
        for (i, p) in ga.iter().enumerate() {
            let oracle = compose_poses(&gt[2 * i], &gt[2 * i + 1]);
            for (x, y) in p.to_array().iter().zip(oracle.to_array()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn subsequence_and_errors() {
        let b = bundle();
        let s = augment(&b, Augmentation::Subsequence { len: 7 }, 3).unwrap();
        s.validate().unwrap();
        assert_eq!(s.len(), 7);
        assert!(augment(&b, Augmentation::Subsequence { len: 2 }, 3).is_err());
        assert!(augment(&b, Augmentation::Interval { k: 11 }, 0).is_err());
        assert!(augment(&b, Augmentation::Interval { k: 12 }, 0).is_err());
    }
}
