//! Image-correlation plus IMU dead reckoning, evaluated against ground truth.
//!
//! cargo run --release --example dead_reckoning

use freehand_recon::estimator::{dead_reckoning_estimate, DeadReckoningConfig};
use freehand_recon::metrics::MetricReport;
use freehand_recon::simulator::{simulate, NoiseSpec, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    for tactic in Tactic::ALL {
        let mut spec = ScanSpec::new(tactic, 120, 3).with_image(62, 65, 0.6);
        spec.trajectory.speed_variation = 0.3;
        spec.noise = NoiseSpec {
            orientation_sigma_deg: 0.2,
            acceleration_sigma: 0.002,
            seed: 3,
        };
        let b = simulate(&spec)?;
        let est = dead_reckoning_estimate(&b, &DeadReckoningConfig::default())?;
        let r = MetricReport::compute(&est.poses, b.ground_truth().unwrap())?;
        println!(
            "{:<7} FDR {:7.2}%  ADR {:7.2}%  MD {:6.2} mm  HD {:6.2} mm  MEA {:.3} deg",
            tactic.to_string(),
            r.fdr,
            r.adr,
            r.md,
            r.hd,
            r.mea
        );
    }
    Ok(())
}
