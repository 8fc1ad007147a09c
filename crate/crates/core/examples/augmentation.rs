//! Sub-sequence, interval and inversion augmentations of a scan.
//!
//! cargo run --release --example augmentation

use freehand_recon::geometry::chain_poses;
use freehand_recon::simulator::{augment, simulate, Augmentation, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let b = simulate(&ScanSpec::new(Tactic::Curved, 40, 8).with_image(62, 65, 0.6))?;
    let end = chain_poses(b.ground_truth().unwrap());
    println!(
        "original: {} frames, end pose {:?}",
        b.frames.len(),
        end.to_array()
    );
    for op in [
        Augmentation::Subsequence { len: 10 },
        Augmentation::Interval { k: 3 },
        Augmentation::Invert,
    ] {
        let a = augment(&b, op, 1)?;
        let end = chain_poses(a.ground_truth().unwrap());
        println!("{op:?}: {} frames, end pose {:?}", a.frames.len(), end.to_array());
    }
    Ok(())
}
