//! Self-supervised consistency losses and the online refinement loop.
//!
//! Four terms constrain the estimates of a single unlabelled scan: sequence
//! composition across frame intervals (SVC), reordered loop paths (PAC),
//! patch content change versus patch motion (PMC) and agreement with the
//! IMU (MSS).

mod mss;
mod pac;
mod pmc;
mod refine;
mod svc;

pub use mss::{acceleration_term, mss_loss, MssValue};
pub use pac::{
    detect_direction_changes, pac_loss, path_pose, reorder_sequence, reorder_targets, reorder_targets_vjp,
    split_segments, PacValue, PathPart, PathTemplate, Reordering, Segmentation,
    DEFAULT_DIRECTION_THRESHOLD_DEG,
};
pub use pmc::{
    interpolate_images, pair_content_differences, patch_3d_distance, patch_3d_distance_vjp,
    patch_content_difference, patch_content_difference_linear, pmc_from_values, pmc_loss,
    FlowWarpInterpolator, Interpolator, InterpolatorKind, LinearInterpolator, PatchGrid,
    DEFAULT_INTERPOLATED, DEFAULT_PATCH_GRID,
};
pub use refine::{refine, LossTerms, LossWeights, RefineConfig, RefineProblem, RefineResult, DEFAULT_K};
pub use svc::{build_subsequences, svc_loss, svc_terms, SubsequenceSet, SvcTerm};
