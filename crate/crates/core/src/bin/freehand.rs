//! Command-line front end for the reconstruction pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
//! `RECON_LOG` sets the log level (error, warn, info, debug, trace).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use freehand_recon::compounding::{
    compare_centerlines, compound, vessel_stats, DistanceSummary, VesselStats,
};
use freehand_recon::consistency::{
    detect_direction_changes, refine, InterpolatorKind, LossTerms, LossWeights, RefineConfig,
    DEFAULT_DIRECTION_THRESHOLD_DEG, DEFAULT_INTERPOLATED, DEFAULT_K,
};
use freehand_recon::estimator::{estimate, train, FusionModel, PearsonScope, TrainConfig, DEFAULT_DIM};
use freehand_recon::geometry::{accumulate_trajectory, Pose6};
use freehand_recon::io;
use freehand_recon::metrics::{pr_curve, DetectionScores, MetricReport};
use freehand_recon::parallel;
use freehand_recon::scan::{AnalyticVessel, ScanBundle};
use freehand_recon::simulator::{
    augment, build_phantom, simulate_with_phantom, Augmentation, NoiseSpec, Phantom, PhantomSpec, ScanSpec,
    Tactic, DEFAULT_IMAGE_SIZE, DEFAULT_SPACING,
};
use freehand_recon::study::{bundle_samples, training_set, TargetSource, TrainingSetSpec};
use freehand_recon::Error;

#[derive(Parser, Debug)]
#[command(
    name = "freehand",
    version,
    about = "Freehand 3D ultrasound trajectory estimation, refinement, evaluation and compounding"
)]
struct Cli {
    /// Worker threads; parallelism is across scan bundles only.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render seeded scan bundles (frames, IMU, ground truth, vessel masks).
    Simulate(SimulateArgs),
    /// Derive a subsequence, interval or inverted bundle.
    Augment(AugmentArgs),
    /// Train a fusion model on bundles.
    Train(TrainArgs),
    /// Estimate inter-frame poses for a bundle.
    Estimate(EstimateArgs),
    /// Refine a model online on bundles and write refined poses.
    Refine(RefineArgs),
    /// Drift and angle metrics of estimated against reference poses.
    Evaluate(EvaluateArgs),
    /// Compound frames into a voxel volume.
    Compound(CompoundArgs),
    /// Vessel volume, length and centerline from masks and poses.
    VesselStats(VesselArgs),
    /// Direction-change frames of a pose sequence.
    DirectionChanges(ChangesArgs),
    /// Simulate, train, estimate, refine, evaluate and compound in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone)]
struct ScanOpts {
    /// Scanning tactic.
    #[arg(long, default_value = "linear")]
    tactic: Tactic,
    /// Frames per scan.
    #[arg(long, default_value_t = 150)]
    frames: usize,
    /// Image width, pixels.
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE.0)]
    width: usize,
    /// Image height, pixels.
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE.1)]
    height: usize,
    /// Pixel spacing, mm.
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    /// Mean elevation speed, mm per frame.
    #[arg(long, default_value_t = 0.5)]
    speed: f64,
    /// Relative amplitude of the periodic speed modulation.
    #[arg(long, default_value_t = 0.0)]
    speed_variation: f64,
    /// Lateral rotation wobble, degrees.
    #[arg(long, default_value_t = 0.0)]
    wobble: f64,
    /// Orientation noise, degrees (standard deviation).
    #[arg(long, default_value_t = 0.0)]
    noise_orientation: f64,
    /// Acceleration noise, mm per frame squared (standard deviation).
    #[arg(long, default_value_t = 0.0)]
    noise_accel: f64,
    /// Phantom seed; defaults to the scan seed.
    #[arg(long)]
    phantom_seed: Option<u64>,
}

impl ScanOpts {
    fn spec(&self, seed: u64) -> ScanSpec {
        let mut s =
            ScanSpec::new(self.tactic, self.frames, seed).with_image(self.width, self.height, self.spacing);
        s.trajectory.speed = self.speed;
        s.trajectory.speed_variation = self.speed_variation;
        s.trajectory.wobble_deg = self.wobble;
        s.noise = NoiseSpec {
            orientation_sigma_deg: self.noise_orientation,
            acceleration_sigma: self.noise_accel,
            seed,
        };
        s
    }

    fn validate(&self, seed: u64) -> Result<(), Error> {
        let s = self.spec(seed);
        s.trajectory.validate()?;
        s.noise.validate()?;
        if s.width == 0 || s.height == 0 || !(s.spacing > 0.0 && s.spacing.is_finite()) {
            return Err(Error::InvalidInput(
                "image size and spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scan: ScanOpts,
    /// Seed of the first scan.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scans, seeded `seed..seed+count`; more than one writes
    /// `scan_<seed>` subdirectories.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AugmentOp {
    Subsequence,
    Interval,
    Invert,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Input bundle directory.
    #[arg(long)]
    scan: PathBuf,
    #[arg(long, value_enum)]
    op: AugmentOp,
    /// Subsequence length.
    #[arg(long, default_value_t = 32)]
    len: usize,
    /// Interval step.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Seed of the subsequence start.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Targets {
    GroundTruth,
    DeadReckoning,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Pearson {
    Flattened,
    PerDimension,
}

#[derive(Args, Debug, Clone)]
struct ModelOpts {
    /// Hidden width of the fusion model.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Seed of the initial weights.
    #[arg(long, default_value_t = 7)]
    model_seed: u64,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    /// Adam learning rate of training.
    #[arg(long, default_value_t = 1e-2)]
    train_lr: f64,
    /// One step per sample in seeded shuffled order.
    #[arg(long)]
    shuffle: bool,
    /// Correlation term of the training loss.
    #[arg(long, value_enum, default_value = "flattened")]
    pearson: Pearson,
    /// Training targets: ground truth, or image dead reckoning.
    #[arg(long, value_enum, default_value = "dead-reckoning")]
    targets: Targets,
    /// Interval augmentations k = 1..=intervals per training bundle.
    #[arg(long, default_value_t = 3)]
    intervals: usize,
    /// Nominal elevation step of dead-reckoning targets, mm per frame.
    #[arg(long, default_value_t = 0.5)]
    dr_step: f64,
}

impl ModelOpts {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.train_lr,
            seed,
            shuffle: self.shuffle,
            pearson: match self.pearson {
                Pearson::Flattened => PearsonScope::Flattened,
                Pearson::PerDimension => PearsonScope::PerDimension,
            },
            ..TrainConfig::default()
        }
    }

    fn target_source(&self) -> TargetSource {
        match self.targets {
            Targets::GroundTruth => TargetSource::GroundTruth,
            Targets::DeadReckoning => TargetSource::DeadReckoning,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        FusionModel::new(self.dim, self.model_seed)?;
        if self.epochs == 0
            || !(self.train_lr > 0.0 && self.train_lr.is_finite())
            || self.intervals == 0
            || !(self.dr_step > 0.0 && self.dr_step.is_finite())
        {
            return Err(Error::InvalidInput(
                "epochs, train-lr, intervals and dr-step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training bundle directories.
    #[arg(long = "scan", required = true)]
    scans: Vec<PathBuf>,
    #[command(flatten)]
    model: ModelOpts,
    /// Seed of the sample order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch loss CSV.
    #[arg(long)]
    losses: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scan: PathBuf,
    /// Output pose CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional accumulated trajectory CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RefineOpts {
    /// Refinement iterations.
    #[arg(long, default_value_t = 60)]
    iters: usize,
    /// Adam learning rate (2e-6 as published for the full-scale network).
    #[arg(long, default_value_t = 2e-6)]
    lr: f64,
    /// Largest subsequence interval.
    #[arg(long = "K", default_value_t = DEFAULT_K)]
    k_max: usize,
    /// Patch grid, rows x columns.
    #[arg(long, default_value = "32x32", value_parser = parse_grid)]
    patches: (usize, usize),
    /// Interpolated frames between each image pair.
    #[arg(long, default_value_t = DEFAULT_INTERPOLATED)]
    interp: usize,
    #[arg(long, value_enum, default_value = "linear")]
    interpolator: Interp,
    /// Seed of term sampling and template choice.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Loss weights svc,pac,pmc,mss.
    #[arg(long, default_value = "1,1,1,1", value_parser = parse_weights)]
    weights: LossWeights,
    /// Direction-change threshold, degrees.
    #[arg(long, default_value_t = DEFAULT_DIRECTION_THRESHOLD_DEG)]
    threshold: f64,
    /// Sampled sequence-consistency terms per iteration; 0 evaluates all.
    #[arg(long, default_value_t = 2048)]
    svc_budget: usize,
    /// Sampled content-consistency pairs; 0 evaluates all.
    #[arg(long, default_value_t = 256)]
    pmc_pairs: usize,
    /// Cycle through all reorder templates instead of one seeded choice.
    #[arg(long)]
    resample_template: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Interp {
    Linear,
    FlowWarp,
}

impl RefineOpts {
    fn config(&self) -> RefineConfig {
        RefineConfig {
            iterations: self.iters,
            lr: self.lr,
            weights: self.weights,
            k_max: self.k_max,
            interpolated: self.interp,
            patch_grid: self.patches,
            interpolator: match self.interpolator {
                Interp::Linear => InterpolatorKind::Linear,
                Interp::FlowWarp => InterpolatorKind::FlowWarp,
            },
            seed: self.seed,
            direction_threshold_deg: self.threshold,
            svc_budget: (self.svc_budget > 0).then_some(self.svc_budget),
            pmc_pair_budget: (self.pmc_pairs > 0).then_some(self.pmc_pairs),
            resample_template: self.resample_template,
        }
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once('x').ok_or("expected ROWSxCOLS")?;
    let r: usize = r.trim().parse().map_err(|e| format!("{e}"))?;
    let c: usize = c.trim().parse().map_err(|e| format!("{e}"))?;
    if r == 0 || c == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((r, c))
}

fn parse_weights(s: &str) -> Result<LossWeights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 || v.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err("expected four non-negative weights svc,pac,pmc,mss".into());
    }
    Ok(LossWeights {
        svc: v[0],
        pac: v[1],
        pmc: v[2],
        mss: v[3],
    })
}

#[derive(Args, Debug)]
struct RefineArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bundle directories; more than one writes `<out>/<scan name>.csv`.
    #[arg(long = "scan", required = true)]
    scans: Vec<PathBuf>,
    #[command(flatten)]
    opts: RefineOpts,
    /// Refined pose CSV, or a directory for several scans.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV (single scan only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Refined model JSON (single scan only).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated pose CSV.
    #[arg(long)]
    est: PathBuf,
    /// Reference pose CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Add Precision-K/Recall-K/F1-K of detected direction changes.
    #[arg(long)]
    pr_curve: bool,
    /// Largest K of the curve.
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    /// Direction-change threshold, degrees.
    #[arg(long, default_value_t = DEFAULT_DIRECTION_THRESHOLD_DEG)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct CompoundArgs {
    #[arg(long)]
    scan: PathBuf,
    /// Pose CSV; defaults to the bundle's ground truth.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Voxel edge, mm.
    #[arg(long, default_value_t = 0.5)]
    voxel: f64,
    /// Output directory for `<stem>.raw` and `<stem>.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "volume")]
    stem: String,
}

#[derive(Args, Debug)]
struct VesselArgs {
    #[arg(long)]
    scan: PathBuf,
    /// Pose CSV; defaults to the bundle's ground truth.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Reference pose CSV for ratios and centerline distances; defaults to
    /// the bundle's ground truth when present.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ChangesArgs {
    #[arg(long)]
    poses: PathBuf,
    /// Direction-change threshold, degrees.
    #[arg(long, default_value_t = DEFAULT_DIRECTION_THRESHOLD_DEG)]
    threshold: f64,
    /// JSON output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    scan: ScanOpts,
    /// Seed of the first test scan.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test scans, seeded `seed..seed+count`, each in `<out>/scan_<seed>`.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    model: ModelOpts,
    /// Simulated linear training scans.
    #[arg(long, default_value_t = 6)]
    train_scans: usize,
    /// Frames per training scan.
    #[arg(long, default_value_t = 80)]
    train_frames: usize,
    /// Seed of the first training scan.
    #[arg(long, default_value_t = 1000)]
    train_seed: u64,
    #[command(flatten)]
    refine: PipelineRefine,
    /// Voxel edge of the compounded volumes, mm.
    #[arg(long, default_value_t = 0.5)]
    voxel: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Refinement options of the pipeline; the learning rate default suits the
/// desk-scale model.
#[derive(Args, Debug)]
struct PipelineRefine {
    #[arg(long, default_value_t = 60)]
    iters: usize,
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    #[arg(long = "K", default_value_t = DEFAULT_K)]
    k_max: usize,
    #[arg(long, default_value = "32x32", value_parser = parse_grid)]
    patches: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_INTERPOLATED)]
    interp: usize,
    #[arg(long, default_value_t = 1)]
    refine_seed: u64,
}

impl PipelineRefine {
    fn config(&self) -> RefineConfig {
        RefineConfig {
            iterations: self.iters,
            lr: self.lr,
            k_max: self.k_max,
            interpolated: self.interp,
            patch_grid: self.patches,
            seed: self.refine_seed,
            ..RefineConfig::default()
        }
    }
}

/// Failure class of a run.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn config(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn invalid(msg: &str) -> Failure {
    Failure::Config(msg.to_string())
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("RECON_LOG", "warn")).init();
    let jobs = cli.jobs;
    if jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, jobs),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(a, jobs),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Refine(a) => cmd_refine(a, jobs),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compound(a) => cmd_compound(a),
        Command::VesselStats(a) => cmd_vessel(a),
        Command::DirectionChanges(a) => cmd_changes(a),
        Command::Pipeline(a) => cmd_pipeline(a, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: invalid configuration: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn phantom_for(opts: &ScanOpts, seed: u64) -> Result<Phantom, Error> {
    build_phantom(&PhantomSpec {
        seed: opts.phantom_seed.unwrap_or(seed),
        ..PhantomSpec::default()
    })
}

fn seeds(first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| first + i).collect()
}

fn cmd_simulate(a: SimulateArgs, jobs: usize) -> Run {
    if a.count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    let seeds = seeds(a.seed, a.count);
    for &s in &seeds {
        a.scan.validate(s).map_err(config)?;
    }
    let shared = a
        .scan
        .phantom_seed
        .map(|s| {
            build_phantom(&PhantomSpec {
                seed: s,
                ..PhantomSpec::default()
            })
        })
        .transpose()?;
    let results = parallel::map(&seeds, jobs, |&seed| -> Result<(), Error> {
        let owned;
        let phantom = match &shared {
            Some(p) => p,
            None => {
                owned = phantom_for(&a.scan, seed)?;
                &owned
            }
        };
        let bundle = simulate_with_phantom(phantom, &a.scan.spec(seed))?;
        let dir = if a.count == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("scan_{seed}"))
        };
        io::write_bundle(&dir, &bundle)
    });
    results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Run {
    let op = match a.op {
        AugmentOp::Subsequence => Augmentation::Subsequence { len: a.len },
        AugmentOp::Interval => Augmentation::Interval { k: a.k },
        AugmentOp::Invert => Augmentation::Invert,
    };
    if matches!(op, Augmentation::Interval { k: 0 }) || matches!(op, Augmentation::Subsequence { len: 0..=2 })
    {
        return Err(invalid("interval k must be >= 1 and subsequence length >= 3"));
    }
    let bundle = io::read_bundle(&a.scan)?;
    io::write_bundle(&a.out, &augment(&bundle, op, a.seed)?)?;
    Ok(())
}

fn cmd_train(a: TrainArgs, jobs: usize) -> Run {
    a.model.validate().map_err(config)?;
    let per = parallel::map(&a.scans, jobs, |dir| -> Result<_, Error> {
        let b = io::read_bundle(dir)?;
        bundle_samples(&b, a.model.intervals, a.model.target_source(), a.model.dr_step)
    });
    let mut samples = Vec::new();
    for s in per {
        samples.extend(s?);
    }
    let init = FusionModel::new(a.model.dim, a.model.model_seed)?;
    let rep = train(&init, &samples, &a.model.train_config(a.seed))?;
    io::write_model(&a.out, &rep.model)?;
    if let Some(p) = &a.losses {
        write_losses(p, &rep.losses)?;
    }
    log::info!(
        "trained on {} samples: loss {:.4} -> {:.4}",
        samples.len(),
        rep.losses.first().copied().unwrap_or(f64::NAN),
        rep.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<(), Error> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for (epoch, &loss) in losses.iter().enumerate() {
        w.serialize(Row { epoch, loss })?;
    }
    w.flush()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn cmd_estimate(a: EstimateArgs) -> Run {
    let model = io::read_model(&a.model)?;
    let bundle = io::read_bundle(&a.scan)?;
    let poses = estimate(&model, &bundle)?.poses;
    io::write_poses(&a.out, &poses)?;
    if let Some(p) = &a.trajectory {
        io::write_trajectory(p, &accumulate_trajectory(&poses))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    svc: f64,
    pac: f64,
    pmc: f64,
    mss: f64,
    total: f64,
    pac_skipped: bool,
}

fn write_trace(path: &Path, trace: &[LossTerms]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for (iteration, t) in trace.iter().enumerate() {
        w.serialize(TraceRow {
            iteration,
            svc: t.svc,
            pac: t.pac,
            pmc: t.pmc,
            mss: t.mss,
            total: t.total,
            pac_skipped: t.pac_skipped,
        })?;
    }
    w.flush()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn cmd_refine(a: RefineArgs, jobs: usize) -> Run {
    let cfg = a.opts.config();
    cfg.validate().map_err(config)?;
    let several = a.scans.len() > 1;
    if several && (a.trace.is_some() || a.model_out.is_some()) {
        return Err(invalid("--trace and --model-out need a single --scan"));
    }
    let model = io::read_model(&a.model)?;
    if several {
        std::fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    }
    let results = parallel::map(&a.scans, jobs, |dir| -> Result<(), Error> {
        let bundle = io::read_bundle(dir)?;
        let r = refine(&model, &bundle, &cfg)?;
        if let Some(d) = &r.diagnostic {
            log::warn!("{}: {d}", dir.display());
        }
        let out = if several {
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scan".into());
            a.out.join(format!("{name}.csv"))
        } else {
            a.out.clone()
        };
        io::write_poses(&out, &r.poses)?;
        if let Some(p) = &a.trace {
            write_trace(p, &r.trace)?;
        }
        if let Some(p) = &a.model_out {
            io::write_model(p, &r.model)?;
        }
        Ok(())
    });
    results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(())
}

#[derive(Serialize)]
struct Detection {
    reference: Vec<usize>,
    detected: Vec<usize>,
    curve: Vec<DetectionScores>,
}

#[derive(Serialize)]
struct EvaluationReport {
    #[serde(flatten)]
    metrics: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    direction_changes: Option<Detection>,
}

fn evaluation(est: &[Pose6], gt: &[Pose6], curve: Option<(usize, f64)>) -> Result<EvaluationReport, Error> {
    let metrics = MetricReport::compute(est, gt)?;
    let direction_changes = match curve {
        Some((kmax, thr)) => {
            let reference = detect_direction_changes(gt, thr)?;
            let detected = detect_direction_changes(est, thr)?;
            let curve = pr_curve(&reference, &detected, kmax);
            Some(Detection {
                reference,
                detected,
                curve,
            })
        }
        None => None,
    };
    Ok(EvaluationReport {
        metrics,
        direction_changes,
    })
}

fn cmd_evaluate(a: EvaluateArgs) -> Run {
    if !(a.threshold > 0.0 && a.threshold < 180.0) {
        return Err(invalid("--threshold must lie in (0, 180)"));
    }
    let est = io::read_poses(&a.est)?;
    let gt = io::read_poses(&a.gt)?;
    let report = evaluation(&est, &gt, a.pr_curve.then_some((a.kmax, a.threshold)))?;
    io::write_json(&a.out, &report)?;
    Ok(())
}

fn poses_or_truth(bundle: &ScanBundle, path: Option<&Path>) -> Result<Vec<Pose6>, Error> {
    match path {
        Some(p) => io::read_poses(p),
        None => Ok(bundle.ground_truth()?.to_vec()),
    }
}

fn cmd_compound(a: CompoundArgs) -> Run {
    if !(a.voxel > 0.0 && a.voxel.is_finite()) {
        return Err(invalid("--voxel must be positive"));
    }
    let bundle = io::read_bundle(&a.scan)?;
    let poses = poses_or_truth(&bundle, a.poses.as_deref())?;
    let vol = compound(&bundle, &poses, a.voxel)?;
    io::write_volume(&a.out, &a.stem, &vol)?;
    Ok(())
}

#[derive(Serialize)]
struct VesselReport {
    stats: VesselStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<VesselStats>,
    /// Estimated over reference volume, percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    volume_ratio_pct: Option<f64>,
    /// Estimated over reference length, percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    length_ratio_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    centerline_distance: Option<DistanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticVessel>,
}

fn vessel_report(
    bundle: &ScanBundle,
    poses: &[Pose6],
    reference: Option<&[Pose6]>,
) -> Result<VesselReport, Error> {
    let stats = vessel_stats(bundle, poses)?;
    let mut rep = VesselReport {
        stats,
        reference: None,
        volume_ratio_pct: None,
        length_ratio_pct: None,
        centerline_distance: None,
        analytic: bundle.meta.vessel,
    };
    if let Some(r) = reference {
        let rs = vessel_stats(bundle, r)?;
        rep.volume_ratio_pct = Some(100.0 * rep.stats.volume_ml / rs.volume_ml);
        rep.length_ratio_pct = Some(100.0 * rep.stats.length_mm / rs.length_mm);
        rep.centerline_distance = Some(compare_centerlines(&rep.stats, &rs)?);
        rep.reference = Some(rs);
    }
    Ok(rep)
}

fn cmd_vessel(a: VesselArgs) -> Run {
    let bundle = io::read_bundle(&a.scan)?;
    let poses = poses_or_truth(&bundle, a.poses.as_deref())?;
    let reference = match (&a.reference, &bundle.gt_poses) {
        (Some(p), _) => Some(io::read_poses(p)?),
        (None, Some(gt)) if a.poses.is_some() => Some(gt.clone()),
        _ => None,
    };
    io::write_json(&a.out, &vessel_report(&bundle, &poses, reference.as_deref())?)?;
    Ok(())
}

#[derive(Serialize)]
struct ChangesReport {
    threshold_deg: f64,
    changes: Vec<usize>,
}

fn cmd_changes(a: ChangesArgs) -> Run {
    if !(a.threshold > 0.0 && a.threshold < 180.0) {
        return Err(invalid("--threshold must lie in (0, 180)"));
    }
    let poses = io::read_poses(&a.poses)?;
    let report = ChangesReport {
        threshold_deg: a.threshold,
        changes: detect_direction_changes(&poses, a.threshold)?,
    };
    match &a.out {
        Some(p) => io::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?),
    }
    Ok(())
}

#[derive(Serialize)]
struct PipelineReport {
    seed: u64,
    tactic: Tactic,
    initial: EvaluationReport,
    refined: EvaluationReport,
    vessel: Option<VesselReport>,
    final_loss: Option<f64>,
}

fn cmd_pipeline(a: PipelineArgs, jobs: usize) -> Run {
    if a.count == 0 || a.train_scans == 0 || !(a.voxel > 0.0 && a.voxel.is_finite()) {
        return Err(invalid("--count, --train-scans and --voxel must be positive"));
    }
    let test_seeds = seeds(a.seed, a.count);
    for &s in &test_seeds {
        a.scan.validate(s).map_err(config)?;
    }
    a.model.validate().map_err(config)?;
    let rcfg = a.refine.config();
    rcfg.validate().map_err(config)?;

    let phantom = build_phantom(&PhantomSpec {
        seed: a.scan.phantom_seed.unwrap_or(a.seed),
        ..PhantomSpec::default()
    })?;
    let spec = TrainingSetSpec {
        scans: a.train_scans,
        frames: a.train_frames,
        max_interval: a.model.intervals,
        speed_variation: a.scan.speed_variation,
        noise_orientation_deg: a.scan.noise_orientation,
        noise_acceleration: a.scan.noise_accel,
        seed: a.train_seed,
        targets: a.model.target_source(),
    };
    let samples = training_set(&phantom, &spec, jobs)?;
    let init = FusionModel::new(a.model.dim, a.model.model_seed)?;
    let trained = train(&init, &samples, &a.model.train_config(a.train_seed))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    io::write_model(&a.out.join("model.json"), &trained.model)?;
    write_losses(&a.out.join("train_losses.csv"), &trained.losses)?;
    let model = trained.model;

    let results = parallel::map(&test_seeds, jobs, |&seed| -> Result<PipelineReport, Error> {
        let dir = a.out.join(format!("scan_{seed}"));
        let bundle = simulate_with_phantom(&phantom, &a.scan.spec(seed))?;
        io::write_bundle(&dir.join("bundle"), &bundle)?;
        let gt = bundle.ground_truth()?.to_vec();
        let initial = estimate(&model, &bundle)?.poses;
        io::write_poses(&dir.join("estimate.csv"), &initial)?;
        let r = refine(&model, &bundle, &rcfg)?;
        io::write_poses(&dir.join("refined.csv"), &r.poses)?;
        io::write_trajectory(
            &dir.join("refined_trajectory.csv"),
            &accumulate_trajectory(&r.poses),
        )?;
        write_trace(&dir.join("trace.csv"), &r.trace)?;
        let curve = Some((10, DEFAULT_DIRECTION_THRESHOLD_DEG));
        let vol = compound(&bundle, &r.poses, a.voxel)?;
        io::write_volume(&dir, "volume", &vol)?;
        let vessel = if bundle
            .masks
            .as_ref()
            .is_some_and(|m| m.iter().any(|m| m.count() > 0))
        {
            Some(vessel_report(&bundle, &r.poses, Some(&gt))?)
        } else {
            None
        };
        let report = PipelineReport {
            seed,
            tactic: a.scan.tactic,
            initial: evaluation(&initial, &gt, curve)?,
            refined: evaluation(&r.poses, &gt, curve)?,
            vessel,
            final_loss: r.trace.last().map(|t| t.total),
        };
        io::write_json(&dir.join("report.json"), &report)?;
        Ok(report)
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    io::write_json(&a.out.join("report.json"), &reports)?;
    Ok(())
}
