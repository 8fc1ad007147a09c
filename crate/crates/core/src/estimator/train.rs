use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::SequenceInput;
use super::model::FusionModel;
use crate::error::{Error, Result};
use crate::geometry::Pose6;
use crate::optim::Adam;
use crate::stats::pearson_grad;

/// Scope of the correlation term of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PearsonScope {
    /// One coefficient over all flattened values.
    #[default]
    Flattened,
    /// Mean of one coefficient per pose component.
    PerDimension,
}

/// A scalar loss with its gradient on the pose sequence it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<[f64; 6]>,
    /// Set when a correlation term hit zero variance and fell back to 1.
    pub degenerate: bool,
}

impl LossValue {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![[0.0; 6]; n],
            degenerate: false,
        }
    }
}

/// `1 - r(x, y)` with its gradient on `x`; zero variance yields `(1, 0, true)`.
pub(crate) fn pearson_term(x: &[f64], y: &[f64]) -> (f64, Vec<f64>, bool) {
    match pearson_grad(x, y) {
        Some((r, gx, _)) => (1.0 - r, gx.iter().map(|g| -g).collect(), false),
        None => (1.0, vec![0.0; x.len()], true),
    }
}

/// Mean absolute error plus one minus Pearson correlation.
pub fn training_loss(est: &[Pose6], gt: &[Pose6], scope: PearsonScope) -> Result<LossValue> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated poses",
            expected: gt.len(),
            actual: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::InvalidInput("empty pose sequences".into()));
    }
    let n = est.len();
    let x: Vec<f64> = est.iter().flat_map(|p| p.to_array()).collect();
    let y: Vec<f64> = gt.iter().flat_map(|p| p.to_array()).collect();
    let total = x.len() as f64;
    let mut value = 0.0;
    let mut g = vec![0.0; x.len()];
    for k in 0..x.len() {
        let d = x[k] - y[k];
        value += d.abs() / total;
        let sgn = if d == 0.0 { 0.0 } else { d.signum() };
        g[k] = sgn / total;
    }
    let mut degenerate = false;
    match scope {
        PearsonScope::Flattened => {
            let (v, gp, deg) = pearson_term(&x, &y);
            value += v;
            degenerate |= deg;
            for (a, b) in g.iter_mut().zip(gp) {
                *a += b;
            }
        }
        PearsonScope::PerDimension => {
            for c in 0..6 {
                let xc: Vec<f64> = (0..n).map(|i| x[i * 6 + c]).collect();
                let yc: Vec<f64> = (0..n).map(|i| y[i * 6 + c]).collect();
                let (v, gp, deg) = pearson_term(&xc, &yc);
                value += v / 6.0;
                degenerate |= deg;
                for (i, gv) in gp.iter().enumerate() {
                    g[i * 6 + c] += gv / 6.0;
                }
            }
        }
    }
    let grad = (0..n).map(|i| std::array::from_fn(|c| g[i * 6 + c])).collect();
    Ok(LossValue {
        value,
        grad,
        degenerate,
    })
}

/// One training sequence with its target poses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: SequenceInput,
    pub targets: Vec<Pose6>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// One step per sample in a seeded shuffled order instead of one
    /// full-batch step per epoch.
    pub shuffle: bool,
    pub pearson: PearsonScope,
    /// Abort when the epoch loss exceeds this value.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            seed: 0,
            shuffle: false,
            pearson: PearsonScope::Flattened,
            divergence_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: FusionModel,
    /// Mean loss over the dataset before each epoch's update.
    pub losses: Vec<f64>,
}

/// Loss and accumulated parameter gradient of one sample.
pub fn sample_loss_and_grad(
    model: &FusionModel,
    sample: &TrainSample,
    scope: PearsonScope,
    grad: &mut [f64],
    weight: f64,
) -> Result<f64> {
    let (est, cache) = model.forward_cached(&sample.input)?;
    let mut loss = training_loss(&est, &sample.targets, scope)?;
    for g in &mut loss.grad {
        for v in g.iter_mut() {
            *v *= weight;
        }
    }
    model.backward(&cache, &loss.grad, grad)?;
    Ok(loss.value)
}

pub fn train(model: &FusionModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid learning rate {}", cfg.lr)));
    }
    let mut model = model.clone();
    let mut opt = Adam::new(model.params.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let w = 1.0 / samples.len() as f64;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        if cfg.shuffle {
            order.shuffle(&mut rng);
            for &i in &order {
                let mut grad = vec![0.0; model.params.len()];
                epoch_loss += w * sample_loss_and_grad(&model, &samples[i], cfg.pearson, &mut grad, 1.0)?;
                opt.step(&mut model.params, &grad);
            }
        } else {
            let mut grad = vec![0.0; model.params.len()];
            for s in samples {
                epoch_loss += w * sample_loss_and_grad(&model, s, cfg.pearson, &mut grad, w)?;
            }
            opt.step(&mut model.params, &grad);
        }
        if !epoch_loss.is_finite() || epoch_loss > cfg.divergence_limit {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        losses.push(epoch_loss);
    }
    Ok(TrainReport { model, losses })
}
