//! Inter-frame motion estimation: a small recurrent fusion model over image,
//! acceleration and orientation cues, and a dead-reckoning baseline.

mod dead_reckoning;
mod features;
mod model;
mod train;

pub use dead_reckoning::{dead_reckoning_estimate, in_plane_shift, DeadReckoningConfig};
pub use features::{
    extract_pair_features, ncc, sequence_input, FeatureCache, InputOptions, PairFeatures, SequenceInput,
    FEATURE_DIM, GRID,
};
pub use model::{
    velocity_features, Block, ForwardCache, FusionModel, InputScale, Layout, DEFAULT_DIM, MODEL_VERSION,
};
pub(crate) use train::pearson_term;
pub use train::{
    sample_loss_and_grad, train, training_loss, LossValue, PearsonScope, TrainConfig, TrainReport,
    TrainSample,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Pose6;
use crate::scan::ScanBundle;

/// Estimated inter-frame poses, one per consecutive frame pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub poses: Vec<Pose6>,
}

/// Model inputs for the full frame sequence of a bundle.
pub fn bundle_input(bundle: &ScanBundle, cache: &mut FeatureCache<'_>) -> Result<SequenceInput> {
    let idx: Vec<usize> = (0..bundle.len()).collect();
    sequence_input(cache, &bundle.imu, &idx, InputOptions::default(), &[])
}

/// Runs the model on the whole scan.
pub fn estimate(model: &FusionModel, bundle: &ScanBundle) -> Result<EstimateResult> {
    bundle.validate()?;
    if bundle.len() < 3 {
        return Err(crate::Error::TooShort {
            what: "frames",
            min: 3,
            actual: bundle.len(),
        });
    }
    let mut cache = FeatureCache::new(&bundle.frames);
    let input = bundle_input(bundle, &mut cache)?;
    Ok(EstimateResult {
        poses: model.forward(&input)?,
    })
}

/// Training sample from a ground-truthed bundle.
pub fn training_sample(bundle: &ScanBundle) -> Result<TrainSample> {
    let targets = bundle.ground_truth()?.to_vec();
    let mut cache = FeatureCache::new(&bundle.frames);
    Ok(TrainSample {
        input: bundle_input(bundle, &mut cache)?,
        targets,
    })
}
