//! Splat a scan into a voxel volume with ground-truth and estimated poses.
//!
//! cargo run --release --example compounding_volume -- [out_dir]

use freehand_recon::compounding::compound;
use freehand_recon::estimator::{dead_reckoning_estimate, DeadReckoningConfig};
use freehand_recon::io;
use freehand_recon::simulator::{simulate, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let b = simulate(&ScanSpec::new(Tactic::Sector, 80, 6))?;
    let gt = compound(&b, b.ground_truth().unwrap(), 0.5)?;
    let est = dead_reckoning_estimate(&b, &DeadReckoningConfig::default())?;
    let dr = compound(&b, &est.poses, 0.5)?;
    for (label, v) in [("ground truth", &gt), ("dead reckoning", &dr)] {
        println!(
            "{label:<15} dims {:?}, {} of {} voxels covered",
            v.dims,
            v.covered(),
            v.values.len()
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::Path::new(&dir);
        io::write_volume(dir, "gt", &gt)?;
        io::write_volume(dir, "dr", &dr)?;
        println!("wrote gt.raw/json and dr.raw/json to {}", dir.display());
    }
    Ok(())
}
