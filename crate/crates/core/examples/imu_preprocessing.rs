//! Relative orientations and gravity-free acceleration from the IMU stream,
//! compared with the values implied by the ground-truth motion.
//!
//! cargo run --release --example imu_preprocessing

use freehand_recon::geometry::angle_diff;
use freehand_recon::imu::{estimated_acceleration, preprocess_acceleration, relative_euler};
use freehand_recon::simulator::{simulate, ScanSpec, Tactic};

fn main() -> freehand_recon::Result<()> {
    let mut spec = ScanSpec::new(Tactic::Curved, 60, 2).with_image(62, 65, 0.6);
    spec.trajectory.speed_variation = 0.3;
    let b = simulate(&spec)?;
    let gt = b.ground_truth().unwrap();
    let rel = relative_euler(&b.imu)?;
    let worst = rel
        .iter()
        .zip(gt)
        .map(|(r, g)| {
            let e = g.rotation;
            angle_diff(r.rx, e.rx)
                .abs()
                .max(angle_diff(r.ry, e.ry).abs())
                .max(angle_diff(r.rz, e.rz).abs())
        })
        .fold(0.0, f64::max);
    println!("relative orientation vs ground truth: worst error {worst:.2e} deg");

    // the pose-implied series covers interior frames only; recenter to match
    let all = preprocess_acceleration(&b.imu);
    let interior = &all[1..all.len() - 1];
    let mean = interior.iter().sum::<nalgebra::Vector3<f64>>() / interior.len() as f64;
    let measured: Vec<_> = interior.iter().map(|a| a - mean).collect();
    let implied = estimated_acceleration(gt)?;
    let worst = measured
        .iter()
        .zip(&implied)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!(
        "{} acceleration samples, worst gap to pose-implied {worst:.2e} mm/frame^2",
        implied.len()
    );
    for (i, a) in measured.iter().take(4).enumerate() {
        println!("  frame {}: ({:+.5}, {:+.5}, {:+.5})", i + 1, a.x, a.y, a.z);
    }
    Ok(())
}
