//! Train the fusion model on simulated scans and estimate a held-out scan.
//!
//! cargo run --release --example train_model -- [epochs]

use freehand_recon::estimator::{estimate, train, training_sample, FusionModel, TrainConfig};
use freehand_recon::metrics::MetricReport;
use freehand_recon::simulator::{
    build_phantom, simulate_with_phantom, NoiseSpec, PhantomSpec, ScanSpec, Tactic,
};

fn main() -> freehand_recon::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let phantom = build_phantom(&PhantomSpec::default())?;
    let scan = |tactic, seed| {
        let mut spec = ScanSpec::new(tactic, 60, seed).with_image(62, 65, 0.6);
        spec.trajectory.speed_variation = 0.3;
        spec.noise = NoiseSpec {
            orientation_sigma_deg: 0.2,
            acceleration_sigma: 0.002,
            seed,
        };
        simulate_with_phantom(&phantom, &spec)
    };
    let mut samples = Vec::new();
    for seed in 0..4 {
        samples.push(training_sample(&scan(
            Tactic::ALL[seed as usize % 4],
            100 + seed,
        )?)?);
    }
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let report = train(&FusionModel::new(8, 7)?, &samples, &cfg)?;
    println!(
        "{} parameters, loss {:.4} -> {:.4} over {epochs} epochs",
        report.model.params.len(),
        report.losses[0],
        report.losses.last().unwrap()
    );
    let test = scan(Tactic::Curved, 999)?;
    let est = estimate(&report.model, &test)?;
    let r = MetricReport::compute(&est.poses, test.ground_truth().unwrap())?;
    println!(
        "held-out curved scan: FDR {:.2}%  MD {:.2} mm  MEA {:.3} deg",
        r.fdr, r.md, r.mea
    );
    Ok(())
}
