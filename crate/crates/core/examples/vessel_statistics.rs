//! Vessel volume, length and centerline distance from the scan masks.
//!
//! cargo run --release --example vessel_statistics

use freehand_recon::compounding::{compare_centerlines, vessel_stats};
use freehand_recon::estimator::{dead_reckoning_estimate, DeadReckoningConfig};
use freehand_recon::simulator::{simulate, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let mut spec = ScanSpec::new(Tactic::Linear, 120, 10);
    spec.trajectory.speed_variation = 0.3;
    let b = simulate(&spec)?;
    let truth = b.meta.vessel.unwrap();
    let gt = vessel_stats(&b, b.ground_truth().unwrap())?;
    println!(
        "analytic: {:.3} ml over {:.1} mm; from masks with true poses: {:.3} ml over {:.1} mm",
        truth.swept_volume_ml, truth.swept_length_mm, gt.volume_ml, gt.length_mm
    );
    let est = dead_reckoning_estimate(&b, &DeadReckoningConfig::default())?;
    let e = vessel_stats(&b, &est.poses)?;
    let d = compare_centerlines(&e, &gt)?;
    println!(
        "dead reckoning: volume {:.1}%  length {:.1}%  centerline distance mean {:.2} / max {:.2} mm",
        100.0 * e.volume_ml / gt.volume_ml,
        100.0 * e.length_mm / gt.length_mm,
        d.mean,
        d.max
    );
    Ok(())
}
