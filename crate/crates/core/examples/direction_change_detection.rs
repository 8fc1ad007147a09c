//! Direction changes in a loop scan and their tolerance-k precision/recall.
//!
//! cargo run --release --example direction_change_detection

use freehand_recon::consistency::{detect_direction_changes, DEFAULT_DIRECTION_THRESHOLD_DEG};
use freehand_recon::estimator::{dead_reckoning_estimate, DeadReckoningConfig};
use freehand_recon::metrics::pr_curve;
use freehand_recon::simulator::{simulate, NoiseSpec, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let mut spec = ScanSpec::new(Tactic::Loop, 150, 5).with_image(62, 65, 0.6);
    spec.noise = NoiseSpec {
        orientation_sigma_deg: 0.2,
        acceleration_sigma: 0.002,
        seed: 5,
    };
    let b = simulate(&spec)?;
    let truth = &b.meta.direction_changes;
    let found = detect_direction_changes(b.ground_truth().unwrap(), DEFAULT_DIRECTION_THRESHOLD_DEG)?;
    println!("simulated changes {truth:?}, detected on ground truth {found:?}");
    let est = dead_reckoning_estimate(&b, &DeadReckoningConfig::default())?;
    let det = detect_direction_changes(&est.poses, DEFAULT_DIRECTION_THRESHOLD_DEG)?;
    println!("detected on dead-reckoned poses {det:?}");
    for s in pr_curve(truth, &det, 6) {
        println!(
            "  k={}  tp={}  precision {:.2}  recall {:.2}  f1 {:.2}",
            s.k, s.tp, s.precision, s.recall, s.f1
        );
    }
    Ok(())
}
