//! Render a synthetic scan of each tactic and write one to disk.
//!
//! cargo run --release --example simulate_scan -- [out_dir]

use freehand_recon::io;
use freehand_recon::simulator::{simulate, NoiseSpec, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let out = std::env::args().nth(1);
    for tactic in Tactic::ALL {
        let mut spec = ScanSpec::new(tactic, 100, 1);
        spec.noise = NoiseSpec {
            orientation_sigma_deg: 0.2,
            acceleration_sigma: 0.002,
            seed: 1,
        };
        let b = simulate(&spec)?;
        let f = &b.frames[0];
        let mean = f.data.iter().map(|v| *v as f64).sum::<f64>() / f.data.len() as f64;
        println!(
            "{:<7} {} frames of {}x{}, mean intensity {:.1}, direction changes {:?}",
            tactic.to_string(),
            b.frames.len(),
            f.width,
            f.height,
            mean,
            b.meta.direction_changes
        );
        if let (Some(dir), Tactic::Loop) = (&out, tactic) {
            io::write_bundle(std::path::Path::new(dir), &b)?;
            println!("wrote loop scan to {dir}");
        }
    }
    Ok(())
}
