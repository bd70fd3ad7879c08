//! CLI behavior: exit codes, flag validation, and output layout.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smoothcert"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const PLAIN_CFG: &str = r#"{"epochs": 3, "batch_size": 16, "learning_rate": 0.3,
                            "mode": "plain", "seed": 7}"#;

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("certify"));
    assert!(text.contains("compare-bounds"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["certify", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"epochs": 3, "batch_size": 16, "learning_rate": 0.3,
            "mode": "plain", "seed": 7, "learning_rte": 0.5}"#,
    );
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--checkpoint"])
        .arg(dir.path().join("m.ckpt"))
        .args(["--out"])
        .arg(dir.path().join("m.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning_rte"), "stderr: {err}");
}

#[test]
fn missing_config_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(dir.path().join("nope.json"))
        .args(["--checkpoint"])
        .arg(dir.path().join("m.ckpt"))
        .args(["--out"])
        .arg(dir.path().join("m.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["certify", "--checkpoint"])
        .arg(dir.path().join("nope.ckpt"))
        .args(["--sigma", "0.5", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = bin()
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args(["--sigma", "0.5", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_requires_a_noise_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", PLAIN_CFG);
    let ckpt = dir.path().join("m.ckpt");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--checkpoint"])
        .arg(&ckpt)
        .args(["--out"])
        .arg(dir.path().join("m.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    let out = bin()
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // sigma and lambda together are rejected too
    let out = bin()
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args(["--sigma", "0.5", "--lambda", "1.0", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_produces_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", PLAIN_CFG);
    let ckpt = dir.path().join("m.ckpt");
    let metrics = dir.path().join("metrics.csv");

    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--checkpoint"])
        .arg(&ckpt)
        .args(["--out"])
        .arg(&metrics)
        .args(["--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let metrics_text = fs::read_to_string(&metrics).unwrap();
    assert!(metrics_text.starts_with("# smoothcert v1\n"));
    assert_eq!(metrics_text.lines().count(), 2 + 3); // header + schema + 3 epochs

    let cert_dir = dir.path().join("cert");
    let status = bin()
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args([
            "--sigma", "0.5", "--n", "20", "--seed", "5", "--radii", "0,0.1,0.2", "--out",
        ])
        .arg(&cert_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(cert_dir.join("curve.csv").exists());
    assert!(cert_dir.join("records_gaussian_0.5.csv").exists());
    let curve = fs::read_to_string(cert_dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("# smoothcert v1\n"));
    assert_eq!(curve.lines().count(), 2 + 3);

    let attack_dir = dir.path().join("attack");
    let status = bin()
        .args(["attack", "--checkpoint"])
        .arg(&ckpt)
        .args([
            "--epsilon", "0", "--epsilon", "0.2", "--steps", "4", "--eot", "2", "--n", "20",
            "--sigma", "0.5", "--seed", "5", "--out",
        ])
        .arg(&attack_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let curve = fs::read_to_string(attack_dir.join("attack_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2 + 2);
    // epsilon = 0 leaves inputs untouched, so its row equals clean accuracy
    assert!(attack_dir.join("attack_records.csv").exists());

    let cmp_dir = dir.path().join("cmp");
    let status = bin()
        .args(["compare-bounds", "--step", "0.1", "--out"])
        .arg(&cmp_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let cmp = fs::read_to_string(cmp_dir.join("compare_bounds.csv")).unwrap();
    assert!(cmp.starts_with("# smoothcert v1\n"));
    // every grid row satisfies ours >= baseline, and ties give two zeros
    let mut saw_tie = false;
    for line in cmp.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let p1: f64 = fields[0].parse().unwrap();
        let p2: f64 = fields[1].parse().unwrap();
        let ours: f64 = fields[2].parse().unwrap();
        let baseline: f64 = fields[3].parse().unwrap();
        assert!(ours >= baseline, "row {line}");
        if p1 == p2 {
            saw_tie = true;
            assert_eq!(ours, 0.0, "row {line}");
            assert_eq!(baseline, 0.0, "row {line}");
        }
    }
    assert!(saw_tie, "grid contained no p1 = p2 rows");
}

#[test]
fn laplacian_certification_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", PLAIN_CFG);
    let ckpt = dir.path().join("m.ckpt");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--checkpoint"])
        .arg(&ckpt)
        .args(["--out"])
        .arg(dir.path().join("m.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    // L1 certification via --lambda, on the default thread pool
    let out_a = dir.path().join("lap_a");
    let status = bin()
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args(["--lambda", "1", "--n", "20", "--seed", "9", "--radii", "0,0.5", "--out"])
        .arg(&out_a)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_a.join("records_laplacian_1.csv").exists());

    // capping the pool must not change any output byte
    let out_b = dir.path().join("lap_b");
    let status = bin()
        .env("SMOOTHCERT_THREADS", "1")
        .args(["certify", "--checkpoint"])
        .arg(&ckpt)
        .args(["--lambda", "1", "--n", "20", "--seed", "9", "--radii", "0,0.5", "--out"])
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["curve.csv", "records_laplacian_1.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs under SMOOTHCERT_THREADS=1"
        );
    }
}

#[test]
fn unsmoothed_attack_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", PLAIN_CFG);
    let ckpt = dir.path().join("m.ckpt");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--checkpoint"])
        .arg(&ckpt)
        .args(["--out"])
        .arg(dir.path().join("m.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    let out_dir = dir.path().join("attack0");
    let status = bin()
        .args(["attack", "--checkpoint"])
        .arg(&ckpt)
        .args([
            "--epsilon", "0.2", "--steps", "4", "--eot", "2", "--sigma", "0", "--seed", "5",
            "--out",
        ])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success(), "sigma=0 evaluation mode failed");
}
