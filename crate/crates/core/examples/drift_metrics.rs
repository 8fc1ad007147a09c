//! Trajectory error metrics for a perturbed copy of a ground-truth scan.
//!
//! cargo run --release --example drift_metrics

use freehand_recon::geometry::Pose6;
use freehand_recon::metrics::MetricReport;
use freehand_recon::simulator::{simulate, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let b = simulate(&ScanSpec::new(Tactic::Linear, 100, 4).with_image(62, 65, 0.6))?;
    let gt = b.ground_truth().unwrap();
    for (label, scale, tilt) in [
        ("exact", 1.0, 0.0),
        ("10% long", 1.1, 0.0),
        ("0.1 deg tilt", 1.0, 0.1),
    ] {
        let est: Vec<Pose6> = gt
            .iter()
            .map(|p| {
                let mut q = *p;
                q.tz *= scale;
                q.rotation.rx += tilt;
                q
            })
            .collect();
        let r = MetricReport::compute(&est, gt)?;
        println!(
            "{label:<13} FDR {:6.2}%  ADR {:6.2}%  MD {:6.3}  SD {:6.3}  HD {:6.3}  MEA {:.3}",
            r.fdr, r.adr, r.md, r.sd, r.hd, r.mea
        );
    }
    Ok(())
}
