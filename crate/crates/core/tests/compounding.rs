use freehand_recon::compounding::{compare_centerlines, compound, vessel_stats};
use freehand_recon::geometry::Pose6;
use freehand_recon::simulator::{
    build_phantom, generate_trajectory, simulate_with_phantom, PhantomSpec, ScanSpec, Tactic,
};

#[test]
fn ground_truth_volume_matches_the_phantom() {
    let phantom = build_phantom(&PhantomSpec::default()).unwrap();
    let spec = ScanSpec::new(Tactic::Linear, 60, 3).with_image(124, 130, 0.3);
    let b = simulate_with_phantom(&phantom, &spec).unwrap();
    let vol = compound(&b, b.ground_truth().unwrap(), 0.5).unwrap();
    let base = generate_trajectory(&spec.trajectory).unwrap().base;
    let (mut err, mut n) = (0.0, 0usize);
    for z in 0..vol.dims[2] {
        for y in 0..vol.dims[1] {
            for x in 0..vol.dims[0] {
                if let Some(v) = vol.value(x, y, z) {
                    let w = base.transform_point(&vol.voxel_center(x, y, z));
                    err += (v as f64 - phantom.sample(&w) as f64).abs();
                    n += 1;
                }
            }
        }
    }
    let mae = err / n as f64;
    assert!(n > 10_000, "{n} covered voxels");
    assert!(mae < 10.0, "mean absolute error {mae}");
}

#[test]
fn vessel_statistics_track_the_analytic_tube() {
    let phantom = build_phantom(&PhantomSpec::default()).unwrap();
    let b = simulate_with_phantom(&phantom, &ScanSpec::new(Tactic::Linear, 100, 4)).unwrap();
    let truth = b.meta.vessel.unwrap();
    let gt = b.ground_truth().unwrap();
    let s = vessel_stats(&b, gt).unwrap();
    assert!((s.volume_ml - truth.swept_volume_ml).abs() <= 0.05 * truth.swept_volume_ml);
    assert!((s.length_mm - truth.swept_length_mm).abs() <= 0.02 * truth.swept_length_mm);

    // stretching every elevation step by 10% stretches length and volume
    let stretched: Vec<Pose6> = gt.iter().map(|p| Pose6 { tz: p.tz * 1.1, ..*p }).collect();
    let e = vessel_stats(&b, &stretched).unwrap();
    assert!((e.length_mm / s.length_mm - 1.1).abs() < 1e-6);
    assert!((e.volume_ml / s.volume_ml - 1.1).abs() < 1e-6);
    let d = compare_centerlines(&e, &s).unwrap();
    assert!(d.max > d.mean && d.mean > 0.0);
    assert!((d.max - 0.1 * s.length_mm).abs() < 0.05);
}

#[test]
fn sector_sweep_compounds_a_fan() {
    let phantom = build_phantom(&PhantomSpec::default()).unwrap();
    let b = simulate_with_phantom(
        &phantom,
        &ScanSpec::new(Tactic::Sector, 40, 5).with_image(62, 65, 0.6),
    )
    .unwrap();
    let vol = compound(&b, b.ground_truth().unwrap(), 1.0).unwrap();
    assert!(vol.covered() > 0);
    assert!(vol.weights.iter().all(|w| w.is_finite() && *w >= 0.0));
}
