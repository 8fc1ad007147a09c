//! Median FDR before and after online refinement, per scanning tactic.
//!
//! cargo run --release --example refinement_trend -- [scans_per_tactic] [jobs]

use std::time::Instant;

use freehand_recon::simulator::{build_phantom, PhantomSpec};
use freehand_recon::study::{run_study, StudyConfig};

fn main() -> freehand_recon::Result<()> {
    let mut args = std::env::args().skip(1);
    let scans: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let jobs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = StudyConfig {
        scans_per_tactic: scans,
        ..StudyConfig::default()
    };
    let t0 = Instant::now();
    let phantom = build_phantom(&PhantomSpec {
        seed: cfg.phantom_seed,
        ..PhantomSpec::default()
    })?;
    let report = run_study(&phantom, &cfg, jobs)?;
    println!(
        "distilled model training loss {:.4} -> {:.4}",
        report.initial_train_loss, report.final_train_loss
    );
    for s in &report.summaries {
        println!(
            "{:<7} median FDR {:7.2}% -> {:7.2}%  reduction {:5.1}%  non-increasing loss steps {}/{}",
            s.tactic.to_string(),
            s.median_fdr_before,
            s.median_fdr_after,
            s.fdr_reduction_pct,
            s.non_increasing_steps,
            s.steps
        );
    }
    println!("elapsed {:.1?}", t0.elapsed());
    Ok(())
}
