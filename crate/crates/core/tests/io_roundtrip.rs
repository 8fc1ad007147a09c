use freehand_recon::compounding::compound;
use freehand_recon::estimator::FusionModel;
use freehand_recon::geometry::Pose6;
use freehand_recon::io;
use freehand_recon::simulator::{augment, simulate, Augmentation, NoiseSpec, ScanSpec, Tactic};

fn bundle() -> freehand_recon::scan::ScanBundle {
    let mut spec = ScanSpec::new(Tactic::Loop, 30, 8).with_image(62, 65, 0.6);
    spec.noise = NoiseSpec {
        orientation_sigma_deg: 0.2,
        acceleration_sigma: 0.002,
        seed: 8,
    };
    simulate(&spec).unwrap()
}

#[test]
fn bundle_round_trip_is_exact() {
    let b = bundle();
    let dir = tempfile::tempdir().unwrap();
    io::write_bundle(dir.path(), &b).unwrap();
    let back = io::read_bundle(dir.path()).unwrap();
    assert_eq!(back, b);

    // a bundle without ground truth or masks also round trips
    let mut bare = augment(&b, Augmentation::Invert, 0).unwrap();
    bare.gt_poses = None;
    bare.masks = None;
    let dir = tempfile::tempdir().unwrap();
    io::write_bundle(dir.path(), &bare).unwrap();
    assert!(!dir.path().join(io::GT_FILE).exists());
    assert_eq!(io::read_bundle(dir.path()).unwrap(), bare);
}

#[test]
fn poses_imu_and_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let poses = vec![
        Pose6::new(0.1, -2.5, 1e-17, 179.999, -89.0, 0.0),
        Pose6::new(1.0 / 3.0, 2.0f64.sqrt(), -0.0, 12.5, 0.25, -33.3),
    ];
    let p = dir.path().join("poses.csv");
    io::write_poses(&p, &poses).unwrap();
    assert_eq!(io::read_poses(&p).unwrap(), poses);
    let header = std::fs::read_to_string(&p).unwrap();
    assert!(header.starts_with("tx,ty,tz,rx,ry,rz"));

    let b = bundle();
    let p = dir.path().join("imu.csv");
    io::write_imu(&p, &b.imu).unwrap();
    assert_eq!(io::read_imu(&p, b.imu.dt).unwrap(), b.imu);

    let m = FusionModel::new(8, 3).unwrap();
    let p = dir.path().join("model.json");
    io::write_model(&p, &m).unwrap();
    assert_eq!(io::read_model(&p).unwrap(), m);
}

#[test]
fn corrupt_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("poses.csv");
    std::fs::write(&p, "tx,ty,tz,rx,ry,rz\n1,2,3,4,5\n").unwrap();
    assert!(io::read_poses(&p).is_err());
    std::fs::write(&p, "tx,ty,tz,rx,ry,rz\n1,2,NaN,4,5,6\n").unwrap();
    assert!(io::read_poses(&p).is_err());
    assert!(io::read_poses(&dir.path().join("missing.csv")).is_err());

    let b = bundle();
    let d = dir.path().join("scan");
    io::write_bundle(&d, &b).unwrap();
    std::fs::write(d.join(io::FRAMES_FILE), [0u8; 10]).unwrap();
    assert!(io::read_bundle(&d).is_err());
}

#[test]
fn volume_header_matches_raw_size() {
    let b = bundle();
    let vol = compound(&b, b.ground_truth().unwrap(), 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::write_volume(dir.path(), "vol", &vol).unwrap();
    let h = io::read_volume_header(&dir.path().join("vol.json")).unwrap();
    assert_eq!(h, vol.header());
    let raw = std::fs::metadata(dir.path().join("vol.raw")).unwrap().len() as usize;
    assert_eq!(raw, 4 * h.dims.iter().product::<usize>());
}
