use std::path::Path;
use std::process::{Command, Output};

fn freehand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freehand"))
        .args(args)
        .env_remove("RECON_LOG")
        .output()
        .expect("run freehand")
}

fn ok(args: &[&str]) {
    let out = freehand(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--width", "62", "--height", "65", "--spacing", "0.6"];

fn simulate(out: &Path, extra: &[&str]) {
    let mut args = vec![
        "simulate",
        "--tactic",
        "loop",
        "--frames",
        "50",
        "--seed",
        "3",
        "--out",
        p(out),
    ];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap()).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        if e.path().is_dir() {
            for (n, b) in read_dir_bytes(&e.path()) {
                out.push((format!("{name}/{n}"), b));
            }
        } else {
            out.push((name, std::fs::read(e.path()).unwrap()));
        }
    }
    out
}

#[test]
fn simulate_is_deterministic_across_runs_and_jobs() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    simulate(&a, &[]);
    simulate(&b, &[]);
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));

    let (c, d) = (t.path().join("c"), t.path().join("d"));
    simulate(&c, &["--count", "3", "--phantom-seed", "1"]);
    let mut args = vec!["--jobs", "3"];
    let mut sim = vec![
        "simulate",
        "--tactic",
        "loop",
        "--frames",
        "50",
        "--seed",
        "3",
        "--out",
        p(&d),
    ];
    sim.extend(SMALL);
    sim.extend(["--count", "3", "--phantom-seed", "1"]);
    args.extend(sim);
    ok(&args);
    let files = read_dir_bytes(&c);
    assert!(files.iter().any(|f| f.0.starts_with("scan_5/")));
    assert_eq!(files, read_dir_bytes(&d));
}

#[test]
fn evaluate_against_itself_is_all_zero() {
    let t = tempfile::tempdir().unwrap();
    let scan = t.path().join("scan");
    simulate(&scan, &[]);
    let gt = scan.join("poses_gt.csv");
    let report = t.path().join("report.json");
    ok(&[
        "evaluate",
        "--est",
        p(&gt),
        "--gt",
        p(&gt),
        "--out",
        p(&report),
        "--pr-curve",
        "--kmax",
        "5",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for key in ["fdr", "adr", "md", "sd", "hd", "mea"] {
        assert_eq!(v[key].as_f64(), Some(0.0), "{key}");
    }
    let curve = v["direction_changes"]["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 6);
    assert!(curve.iter().all(|c| c["f1"].as_f64() == Some(1.0)));

    let changes = t.path().join("changes.json");
    ok(&["direction-changes", "--poses", p(&gt), "--out", p(&changes)]);
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(&changes).unwrap()).unwrap();
    assert_eq!(c["changes"].as_array().unwrap().len(), 4);
}

#[test]
fn stage_by_stage_run() {
    let t = tempfile::tempdir().unwrap();
    let scan = t.path().join("scan");
    simulate(&scan, &["--noise-orientation", "0.2", "--noise-accel", "0.002"]);
    let aug = t.path().join("aug");
    ok(&[
        "augment",
        "--scan",
        p(&scan),
        "--op",
        "interval",
        "--k",
        "2",
        "--out",
        p(&aug),
    ]);
    let model = t.path().join("model.json");
    let losses = t.path().join("losses.csv");
    ok(&[
        "train",
        "--scan",
        p(&scan),
        "--scan",
        p(&aug),
        "--dim",
        "8",
        "--epochs",
        "20",
        "--intervals",
        "2",
        "--targets",
        "ground-truth",
        "--out",
        p(&model),
        "--losses",
        p(&losses),
    ]);
    assert_eq!(std::fs::read_to_string(&losses).unwrap().lines().count(), 21);
    let est = t.path().join("est.csv");
    ok(&[
        "estimate",
        "--model",
        p(&model),
        "--scan",
        p(&scan),
        "--out",
        p(&est),
    ]);
    let refined = t.path().join("refined.csv");
    let trace = t.path().join("trace.csv");
    ok(&[
        "refine",
        "--model",
        p(&model),
        "--scan",
        p(&scan),
        "--iters",
        "3",
        "--lr",
        "1e-4",
        "--interp",
        "7",
        "--patches",
        "8x8",
        "--K",
        "5",
        "--out",
        p(&refined),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 5);
    let vol = t.path().join("vol");
    ok(&[
        "compound",
        "--scan",
        p(&scan),
        "--poses",
        p(&refined),
        "--voxel",
        "1",
        "--out",
        p(&vol),
    ]);
    assert!(vol.join("volume.raw").exists() && vol.join("volume.json").exists());
    let vessel = t.path().join("vessel.json");
    ok(&[
        "vessel-stats",
        "--scan",
        p(&scan),
        "--poses",
        p(&est),
        "--out",
        p(&vessel),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&vessel).unwrap()).unwrap();
    assert!(v["volume_ratio_pct"].as_f64().unwrap() > 0.0);
    assert!(v["centerline_distance"]["mean"].as_f64().is_some());
}

#[test]
fn pipeline_report_has_all_six_metrics() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("run");
    let mut args = vec![
        "pipeline",
        "--tactic",
        "curved",
        "--frames",
        "40",
        "--seed",
        "2",
        "--train-scans",
        "2",
        "--train-frames",
        "40",
        "--epochs",
        "30",
        "--iters",
        "3",
        "--interp",
        "7",
        "--patches",
        "8x8",
        "--dim",
        "8",
        "--out",
        p(&out),
    ];
    args.extend(SMALL);
    ok(&args);
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let r = &v[0];
    for stage in ["initial", "refined"] {
        for key in ["fdr", "adr", "md", "sd", "hd", "mea"] {
            assert!(r[stage][key].as_f64().unwrap().is_finite(), "{stage}.{key}");
        }
    }
    assert!(out.join("scan_2/volume.raw").exists());
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x");
    // invalid configuration
    for args in [
        vec!["simulate", "--frames", "2", "--out", p(&out)],
        vec!["simulate", "--tactic", "zigzag", "--out", p(&out)],
        vec![
            "simulate",
            "--frames",
            "10",
            "--speed-variation",
            "2",
            "--out",
            p(&out),
        ],
        vec![
            "refine",
            "--model",
            "m.json",
            "--scan",
            "s",
            "--out",
            "o.csv",
            "--patches",
            "0x4",
        ],
        vec![
            "refine", "--model", "m.json", "--scan", "s", "--out", "o.csv", "--lr=-1",
        ],
        vec![
            "evaluate",
            "--est",
            "a.csv",
            "--gt",
            "b.csv",
            "--out",
            "r.json",
            "--threshold",
            "200",
        ],
        vec!["--jobs", "0", "simulate", "--out", p(&out)],
        vec!["no-such-command"],
    ] {
        assert_eq!(freehand(&args).status.code(), Some(2), "{args:?}");
    }
    // runtime failure
    let missing = t.path().join("missing.csv");
    let out = freehand(&[
        "evaluate",
        "--est",
        p(&missing),
        "--gt",
        p(&missing),
        "--out",
        "r.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn help_documents_every_subcommand_and_flag() {
    let out = freehand(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "simulate",
        "augment",
        "train",
        "estimate",
        "refine",
        "evaluate",
        "compound",
        "vessel-stats",
        "direction-changes",
        "pipeline",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
    let out = freehand(&["refine", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--iters",
        "--lr",
        "--K",
        "--patches",
        "--interp",
        "--seed",
        "--out",
        "--trace",
        "--jobs",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    assert!(
        text.contains("[default: 2e-6]") || text.contains("[default: 0.000002]"),
        "{text}"
    );
}
