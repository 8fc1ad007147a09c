//! Refine a trained model on one unlabelled scan and print the loss trace.
//!
//! cargo run --release --example online_refinement -- [iterations]

use freehand_recon::consistency::{refine, RefineConfig};
use freehand_recon::estimator::{estimate, train, training_sample, FusionModel, TrainConfig};
use freehand_recon::metrics::MetricReport;
use freehand_recon::simulator::{
    build_phantom, simulate_with_phantom, NoiseSpec, PhantomSpec, ScanSpec, Tactic,
};

fn main() -> freehand_recon::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let phantom = build_phantom(&PhantomSpec::default())?;
    let scan = |seed| {
        let mut spec = ScanSpec::new(Tactic::Loop, 80, seed).with_image(62, 65, 0.6);
        spec.trajectory.speed_variation = 0.3;
        spec.noise = NoiseSpec {
            orientation_sigma_deg: 0.2,
            acceleration_sigma: 0.002,
            seed,
        };
        simulate_with_phantom(&phantom, &spec)
    };
    let sample = training_sample(&scan(1)?)?;
    let cfg = TrainConfig {
        epochs: 150,
        ..TrainConfig::default()
    };
    let model = train(&FusionModel::new(8, 7)?, &[sample], &cfg)?.model;

    let test = scan(2)?;
    let gt = test.ground_truth().unwrap();
    let before = MetricReport::compute(&estimate(&model, &test)?.poses, gt)?;
    let rc = RefineConfig {
        iterations,
        lr: 1e-4,
        interpolated: 15,
        patch_grid: (16, 16),
        ..RefineConfig::default()
    };
    let r = refine(&model, &test, &rc)?;
    for (i, t) in r.trace.iter().enumerate().step_by((iterations / 5).max(1)) {
        println!(
            "iter {i:3}: total {:.5}  svc {:.5}  pac {:.5}{}  pmc {:.5}  mss {:.5}",
            t.total,
            t.svc,
            t.pac,
            if t.pac_skipped { " (skipped)" } else { "" },
            t.pmc,
            t.mss
        );
    }
    let after = MetricReport::compute(&r.poses, gt)?;
    println!(
        "FDR {:.2}% -> {:.2}%, MD {:.2} -> {:.2} mm",
        before.fdr, after.fdr, before.md, after.md
    );
    Ok(())
}
