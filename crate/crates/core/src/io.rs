//! On-disk formats: pose/trajectory/IMU CSV, scan bundle directories, model
//! and report JSON, raw volumes.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::compounding::{Volume, VolumeHeader};
use crate::error::{Error, Result};
use crate::estimator::FusionModel;
use crate::frame::{Frame, Mask};
use crate::geometry::{EulerAngles, Pose6, Trajectory};
use crate::imu::{ImuSample, ImuSeries};
use crate::scan::{ScanBundle, ScanMeta};

pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.raw";
pub const IMU_FILE: &str = "imu.csv";
pub const GT_FILE: &str = "poses_gt.csv";
pub const MASKS_FILE: &str = "masks.raw";

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    tx: f64,
    ty: f64,
    tz: f64,
    rx: f64,
    ry: f64,
    rz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    frame_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ImuRow {
    frame_index: usize,
    Ox: f64,
    Oy: f64,
    Oz: f64,
    Ax: f64,
    Ay: f64,
    Az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_poses(path: &Path, poses: &[Pose6]) -> Result<()> {
    let mut w = writer(path)?;
    for p in poses {
        w.serialize(PoseRow {
            tx: p.tx,
            ty: p.ty,
            tz: p.tz,
            rx: p.rotation.rx,
            ry: p.rotation.ry,
            rz: p.rotation.rz,
        })?;
    }
    flush(w, path)
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose6>> {
    let rows: Vec<PoseRow> = read_rows(path)?;
    let poses: Vec<Pose6> = rows
        .into_iter()
        .map(|r| Pose6::new(r.tx, r.ty, r.tz, r.rx, r.ry, r.rz))
        .collect();
    if let Some(i) = poses.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("pose row {i} of {}", path.display())));
    }
    Ok(poses)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    for (i, p) in traj.positions.iter().enumerate() {
        w.serialize(TrajectoryRow {
            frame_index: i,
            x: p.x,
            y: p.y,
            z: p.z,
        })?;
    }
    flush(w, path)
}

pub fn write_imu(path: &Path, imu: &ImuSeries) -> Result<()> {
    let mut w = writer(path)?;
    for (i, s) in imu.samples.iter().enumerate() {
        w.serialize(ImuRow {
            frame_index: i,
            Ox: s.orientation.rx,
            Oy: s.orientation.ry,
            Oz: s.orientation.rz,
            Ax: s.acceleration.x,
            Ay: s.acceleration.y,
            Az: s.acceleration.z,
            gx: s.gravity.x,
            gy: s.gravity.y,
            gz: s.gravity.z,
        })?;
    }
    flush(w, path)
}

pub fn read_imu(path: &Path, dt: f64) -> Result<ImuSeries> {
    let rows: Vec<ImuRow> = read_rows(path)?;
    for (i, r) in rows.iter().enumerate() {
        if r.frame_index != i {
            return Err(Error::Format(format!(
                "{}: row {i} has frame_index {}",
                path.display(),
                r.frame_index
            )));
        }
    }
    let series = ImuSeries {
        samples: rows
            .into_iter()
            .map(|r| ImuSample {
                orientation: EulerAngles::new(r.Ox, r.Oy, r.Oz),
                acceleration: Vector3::new(r.Ax, r.Ay, r.Az),
                gravity: Vector3::new(r.gx, r.gy, r.gz),
            })
            .collect(),
        dt,
    };
    series.validate()?;
    Ok(series)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn write_model(path: &Path, model: &FusionModel) -> Result<()> {
    model.validate()?;
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<FusionModel> {
    let m: FusionModel = read_json(path)?;
    m.validate()?;
    Ok(m)
}

/// Writes `meta.json`, `frames.raw` (u8, row-major, frame-major),
/// `imu.csv`, and when present `poses_gt.csv` and `masks.raw`.
pub fn write_bundle(dir: &Path, bundle: &ScanBundle) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(META_FILE), &bundle.meta)?;
    let bytes: Vec<u8> = bundle.frames.iter().flat_map(|f| f.to_u8()).collect();
    let p = dir.join(FRAMES_FILE);
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    write_imu(&dir.join(IMU_FILE), &bundle.imu)?;
    if let Some(gt) = &bundle.gt_poses {
        write_poses(&dir.join(GT_FILE), gt)?;
    }
    if let Some(m) = &bundle.masks {
        let bytes: Vec<u8> = m.iter().flat_map(|m| m.to_u8()).collect();
        let p = dir.join(MASKS_FILE);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn split_raw(bytes: &[u8], meta: &ScanMeta, what: &'static str) -> Result<Vec<Vec<u8>>> {
    let per = meta.width * meta.height;
    if bytes.len() != per * meta.frames {
        return Err(Error::LengthMismatch {
            what,
            expected: per * meta.frames,
            actual: bytes.len(),
        });
    }
    Ok(bytes.chunks(per.max(1)).map(|c| c.to_vec()).collect())
}

pub fn read_bundle(dir: &Path) -> Result<ScanBundle> {
    let meta: ScanMeta = read_json(&dir.join(META_FILE))?;
    let p = dir.join(FRAMES_FILE);
    let raw = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    let frames = split_raw(&raw, &meta, "frame bytes")?
        .iter()
        .map(|c| Frame::from_u8(meta.width, meta.height, c))
        .collect::<Result<Vec<_>>>()?;
    let imu = read_imu(&dir.join(IMU_FILE), meta.dt)?;
    let gt_path = dir.join(GT_FILE);
    let gt_poses = if gt_path.exists() {
        Some(read_poses(&gt_path)?)
    } else {
        None
    };
    let mask_path = dir.join(MASKS_FILE);
    let masks = if mask_path.exists() {
        let raw = fs::read(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        Some(
            split_raw(&raw, &meta, "mask bytes")?
                .iter()
                .map(|c| Mask::from_u8(meta.width, meta.height, c))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let bundle = ScanBundle {
        meta,
        frames,
        imu,
        gt_poses,
        masks,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// `<stem>.raw` (f32 little-endian, x fastest) plus `<stem>.json` header.
pub fn write_volume(dir: &Path, stem: &str, vol: &Volume) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes: Vec<u8> = vol.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let p = dir.join(format!("{stem}.raw"));
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    write_json(&dir.join(format!("{stem}.json")), &vol.header())
}

pub fn read_volume_header(path: &Path) -> Result<VolumeHeader> {
    read_json(path)
}
