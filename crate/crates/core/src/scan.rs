//! The scan bundle: frames, IMU stream and optional ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask};
use crate::geometry::{ImagePlane, Pose6};
use crate::imu::ImuSeries;
use crate::simulator::Tactic;

/// Closed-form vessel statistics recorded by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticVessel {
    pub radius_mm: f64,
    pub total_length_mm: f64,
    pub total_volume_ml: f64,
    /// Portion of the vessel between the extreme frame planes of the scan.
    pub swept_length_mm: f64,
    pub swept_volume_ml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanMeta {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// mm per pixel
    pub spacing: f64,
    /// seconds per frame
    pub dt: f64,
    #[serde(default)]
    pub tactic: Option<Tactic>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub vessel: Option<AnalyticVessel>,
    /// Designed direction-change frames (loop scans).
    #[serde(default)]
    pub direction_changes: Vec<usize>,
}

impl ScanMeta {
    pub fn plane(&self) -> ImagePlane {
        ImagePlane::new(self.width, self.height, self.spacing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanBundle {
    pub meta: ScanMeta,
    pub frames: Vec<Frame>,
    pub imu: ImuSeries,
    pub gt_poses: Option<Vec<Pose6>>,
    pub masks: Option<Vec<Mask>>,
}

impl ScanBundle {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn plane(&self) -> ImagePlane {
        self.meta.plane()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if self.meta.frames != n {
            return Err(Error::LengthMismatch {
                what: "meta frame count",
                expected: n,
                actual: self.meta.frames,
            });
        }
        if self.imu.len() != n {
            return Err(Error::LengthMismatch {
                what: "imu samples",
                expected: n,
                actual: self.imu.len(),
            });
        }
        if let Some(p) = &self.gt_poses {
            if p.len() + 1 != n {
                return Err(Error::LengthMismatch {
                    what: "ground-truth poses + 1",
                    expected: n,
                    actual: p.len() + 1,
                });
            }
        }
        if let Some(m) = &self.masks {
            if m.len() != n {
                return Err(Error::LengthMismatch {
                    what: "masks",
                    expected: n,
                    actual: m.len(),
                });
            }
        }
        for f in &self.frames {
            if f.width != self.meta.width || f.height != self.meta.height {
                return Err(Error::InvalidInput("frame size disagrees with meta".into()));
            }
        }
        self.imu.validate()
    }

    pub fn ground_truth(&self) -> Result<&[Pose6]> {
        self.gt_poses
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("bundle carries no ground-truth poses".into()))
    }

    /// Copy restricted to the given frames, in the given order. Ground truth is
    /// dropped; callers that know how to re-derive it do so themselves.
    pub fn select_frames(&self, indices: &[usize]) -> ScanBundle {
        ScanBundle {
            meta: ScanMeta {
                frames: indices.len(),
                direction_changes: Vec::new(),
                ..self.meta.clone()
            },
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            imu: self.imu.select(indices),
            gt_poses: None,
            masks: self
                .masks
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
        }
    }
}
