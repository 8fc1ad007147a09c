//! Refinement trend study: a fusion model distilled from dead reckoning is
//! refined online on seeded noisy scans of every tactic, and drift before and
//! after refinement is compared.

use serde::{Deserialize, Serialize};

use crate::consistency::{refine, RefineConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    dead_reckoning_estimate, estimate, train, training_sample, DeadReckoningConfig, FusionModel, TrainConfig,
    TrainSample,
};
use crate::metrics::MetricReport;
use crate::parallel;
use crate::scan::ScanBundle;
use crate::simulator::{augment, simulate_with_phantom, Augmentation, NoiseSpec, Phantom, ScanSpec, Tactic};
use crate::stats::median;

/// Training targets for the fusion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    GroundTruth,
    DeadReckoning,
}

/// Seeded linear training scans and interval augmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetSpec {
    pub scans: usize,
    pub frames: usize,
    pub max_interval: usize,
    pub speed_variation: f64,
    pub noise_orientation_deg: f64,
    pub noise_acceleration: f64,
    pub seed: u64,
    pub targets: TargetSource,
}

impl Default for TrainingSetSpec {
    fn default() -> Self {
        Self {
            scans: 6,
            frames: 80,
            max_interval: 3,
            speed_variation: 0.3,
            noise_orientation_deg: 0.2,
            noise_acceleration: 0.002,
            seed: 1000,
            targets: TargetSource::DeadReckoning,
        }
    }
}

/// Samples from one bundle and its interval augmentations `k = 1..=max_interval`.
/// Dead-reckoning targets of interval `k` assume a nominal elevation step of
/// `k * step_mm`.
pub fn bundle_samples(
    bundle: &ScanBundle,
    max_interval: usize,
    targets: TargetSource,
    step_mm: f64,
) -> Result<Vec<TrainSample>> {
    if max_interval == 0 {
        return Err(Error::InvalidInput("maximum interval must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(max_interval);
    for k in 1..=max_interval {
        let b = augment(bundle, Augmentation::Interval { k }, 0)?;
        let mut sample = training_sample(&b)?;
        if targets == TargetSource::DeadReckoning {
            let cfg = DeadReckoningConfig {
                nominal_step_mm: step_mm * k as f64,
                ..DeadReckoningConfig::default()
            };
            sample.targets = dead_reckoning_estimate(&b, &cfg)?.poses;
        }
        out.push(sample);
    }
    Ok(out)
}

/// Simulates the training scans and builds their samples.
pub fn training_set(phantom: &Phantom, spec: &TrainingSetSpec, jobs: usize) -> Result<Vec<TrainSample>> {
    if spec.scans == 0 {
        return Err(Error::InvalidInput("training set needs at least one scan".into()));
    }
    let seeds: Vec<u64> = (0..spec.scans as u64).map(|i| spec.seed + i).collect();
    let per_scan = parallel::map(&seeds, jobs, |&seed| -> Result<Vec<TrainSample>> {
        let mut scan = ScanSpec::new(Tactic::Linear, spec.frames, seed);
        scan.noise = NoiseSpec {
            orientation_sigma_deg: spec.noise_orientation_deg,
            acceleration_sigma: spec.noise_acceleration,
            seed,
        };
        scan.trajectory.speed_variation = spec.speed_variation;
        let bundle = simulate_with_phantom(phantom, &scan)?;
        bundle_samples(
            &bundle,
            spec.max_interval,
            spec.targets,
            DeadReckoningConfig::default().nominal_step_mm,
        )
    });
    let mut samples = Vec::new();
    for s in per_scan {
        samples.extend(s?);
    }
    Ok(samples)
}

/// Full study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub phantom_seed: u64,
    pub training: TrainingSetSpec,
    pub model_dim: usize,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub tactics: Vec<Tactic>,
    pub scans_per_tactic: usize,
    pub frames: usize,
    pub speed_variation: f64,
    /// Lateral wobble of linear scans, degrees.
    pub linear_wobble_deg: f64,
    pub noise_orientation_deg: f64,
    pub noise_acceleration: f64,
    pub seed: u64,
    pub refine: RefineConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            phantom_seed: 1,
            training: TrainingSetSpec::default(),
            model_dim: 16,
            model_seed: 7,
            train: TrainConfig {
                epochs: 400,
                lr: 1e-2,
                ..TrainConfig::default()
            },
            tactics: Tactic::ALL.to_vec(),
            scans_per_tactic: 20,
            frames: 150,
            speed_variation: 0.3,
            linear_wobble_deg: 2.0,
            noise_orientation_deg: 0.2,
            noise_acceleration: 0.002,
            seed: 20_000,
            refine: RefineConfig {
                iterations: 60,
                lr: 5e-5,
                ..RefineConfig::default()
            },
        }
    }
}

/// One refined scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub tactic: Tactic,
    pub seed: u64,
    pub before: MetricReport,
    pub after: MetricReport,
    pub loss_trace: Vec<f64>,
    pub pac_skipped: bool,
}

impl ScanOutcome {
    /// Iteration steps whose total loss did not increase, and the step count.
    pub fn non_increasing_steps(&self) -> (usize, usize) {
        let steps = self.loss_trace.len().saturating_sub(1);
        let ok = self.loss_trace.windows(2).filter(|w| w[1] <= w[0]).count();
        (ok, steps)
    }
}

/// Per-tactic aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticSummary {
    pub tactic: Tactic,
    pub scans: usize,
    pub median_fdr_before: f64,
    pub median_fdr_after: f64,
    /// Relative median FDR reduction, percent.
    pub fdr_reduction_pct: f64,
    pub non_increasing_steps: usize,
    pub steps: usize,
}

impl TacticSummary {
    pub fn non_increasing_fraction(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            self.non_increasing_steps as f64 / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub scans: Vec<ScanOutcome>,
    pub summaries: Vec<TacticSummary>,
}

/// Simulates one study scan.
pub fn study_scan(phantom: &Phantom, cfg: &StudyConfig, tactic: Tactic, seed: u64) -> Result<ScanBundle> {
    let mut spec = ScanSpec::new(tactic, cfg.frames, seed);
    spec.noise = NoiseSpec {
        orientation_sigma_deg: cfg.noise_orientation_deg,
        acceleration_sigma: cfg.noise_acceleration,
        seed,
    };
    spec.trajectory.speed_variation = cfg.speed_variation;
    if tactic == Tactic::Linear {
        spec.trajectory.wobble_deg = cfg.linear_wobble_deg;
    }
    simulate_with_phantom(phantom, &spec)
}

/// Refines one scan and measures drift before and after.
pub fn refine_scan(
    model: &FusionModel,
    phantom: &Phantom,
    cfg: &StudyConfig,
    tactic: Tactic,
    seed: u64,
) -> Result<ScanOutcome> {
    let bundle = study_scan(phantom, cfg, tactic, seed)?;
    let gt = bundle.ground_truth()?;
    let initial = estimate(model, &bundle)?.poses;
    let refined = refine(model, &bundle, &cfg.refine)?;
    Ok(ScanOutcome {
        tactic,
        seed,
        before: MetricReport::compute(&initial, gt)?,
        after: MetricReport::compute(&refined.poses, gt)?,
        loss_trace: refined.trace.iter().map(|t| t.total).collect(),
        pac_skipped: refined.trace.first().is_some_and(|t| t.pac_skipped),
    })
}

/// Aggregates outcomes of one tactic.
pub fn summarize(tactic: Tactic, outcomes: &[ScanOutcome]) -> TacticSummary {
    let mine: Vec<&ScanOutcome> = outcomes.iter().filter(|o| o.tactic == tactic).collect();
    let before: Vec<f64> = mine.iter().map(|o| o.before.fdr).collect();
    let after: Vec<f64> = mine.iter().map(|o| o.after.fdr).collect();
    let (mb, ma) = (median(&before), median(&after));
    let (mut ok, mut steps) = (0, 0);
    for o in &mine {
        let (a, b) = o.non_increasing_steps();
        ok += a;
        steps += b;
    }
    TacticSummary {
        tactic,
        scans: mine.len(),
        median_fdr_before: mb,
        median_fdr_after: ma,
        fdr_reduction_pct: 100.0 * (mb - ma) / mb,
        non_increasing_steps: ok,
        steps,
    }
}

/// Trains the distilled model. Returns the model and the first and last
/// epoch losses.
pub fn distill_model(phantom: &Phantom, cfg: &StudyConfig, jobs: usize) -> Result<(FusionModel, f64, f64)> {
    let samples = training_set(phantom, &cfg.training, jobs)?;
    let model = FusionModel::new(cfg.model_dim, cfg.model_seed)?;
    let rep = train(&model, &samples, &cfg.train)?;
    let first = rep.losses.first().copied().unwrap_or(f64::NAN);
    let last = rep.losses.last().copied().unwrap_or(f64::NAN);
    log::info!("distilled model: training loss {first:.4} -> {last:.4}");
    Ok((rep.model, first, last))
}

/// Runs the study. Scans are refined independently on up to `jobs` threads;
/// the report does not depend on `jobs`.
pub fn run_study(phantom: &Phantom, cfg: &StudyConfig, jobs: usize) -> Result<StudyReport> {
    if cfg.scans_per_tactic == 0 || cfg.tactics.is_empty() {
        return Err(Error::InvalidInput("study needs tactics and scans".into()));
    }
    cfg.refine.validate()?;
    let (model, first, last) = distill_model(phantom, cfg, jobs)?;
    let work: Vec<(Tactic, u64)> = cfg
        .tactics
        .iter()
        .flat_map(|&t| (0..cfg.scans_per_tactic as u64).map(move |i| (t, cfg.seed + i)))
        .collect();
    let results = parallel::map(&work, jobs, |&(tactic, seed)| {
        let r = refine_scan(&model, phantom, cfg, tactic, seed);
        if let Ok(o) = &r {
            log::debug!(
                "{tactic} seed {seed}: fdr {:.2} -> {:.2}",
                o.before.fdr,
                o.after.fdr
            );
        }
        r
    });
    let scans = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summaries = cfg.tactics.iter().map(|&t| summarize(t, &scans)).collect();
    Ok(StudyReport {
        initial_train_loss: first,
        final_train_loss: last,
        scans,
        summaries,
    })
}
