use std::fs;
use std::process::Command;

use fastdecor::Exponent;
use fastdecor_cli::bench::{
    manifest_path, read_records, run_bench, write_csv, write_records, BenchPoint, Kernel, Repeats, Status, TimingRecord,
    Variant,
};

fn fastdecor() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fastdecor"))
}

fn sample_record() -> TimingRecord {
    let p = BenchPoint { kernel: Kernel::RsumCross, variant: Variant::Fft, n: 4, d: 9, b: 3, q: Exponent::One, grad: true };
    run_bench(&p, Repeats { repeats: 4, warmup: 1 }, 7).unwrap()
}

#[test]
fn csv_round_trip_is_lossless() {
    let mut r = sample_record();
    r.mean_ns = 0.1 + 0.2;
    r.std_ns = 1.0 / 3.0;
    let oom = TimingRecord { status: Status::Oom, times_ns: vec![], min_ns: 0, peak_bytes: u128::MAX, ..r.clone() };
    let mut buf = Vec::new();
    write_csv(&[r.clone(), oom.clone()], &mut buf, true).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 3);
    assert_eq!(read_records(buf.as_slice()).unwrap(), vec![r, oom]);
}

#[test]
fn grid_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let status = fastdecor()
        .args(["bench", "--kernel", "rsum-cov", "--variant", "naive,fft", "--n", "4", "--d", "8,16", "--repeats", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("schema_version,kernel,variant,n,d,b,q,grad,repeats,warmup,status,"));
    assert!(manifest_path(&out).exists());

    let scaling = fastdecor().arg("scaling").arg(&out).output().unwrap();
    assert!(scaling.status.success());
    // one growth row per variant
    assert_eq!(String::from_utf8(scaling.stdout).unwrap().lines().count(), 3);
}

#[test]
fn empty_grid_is_a_usage_error() {
    let out = fastdecor().args(["bench", "--d", "4", "--b", "8", "--repeats", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = fastdecor().args(["bench", "--kernel", "roff-cov", "--variant", "fft"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = fastdecor().args(["bench", "--repeats", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = fastdecor().args(["bench", "--q", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn append_requires_matching_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let r = sample_record();
    write_records(std::slice::from_ref(&r), &out, false).unwrap();
    write_records(std::slice::from_ref(&r), &out, true).unwrap();
    assert_eq!(read_records(fs::File::open(&out).unwrap()).unwrap().len(), 2);

    fs::write(manifest_path(&out), r#"{"schema_version":1,"header_sha256":"00","git_describe":"x"}"#).unwrap();
    assert!(write_records(std::slice::from_ref(&r), &out, true).is_err());
    fs::remove_file(manifest_path(&out)).unwrap();
    assert!(write_records(std::slice::from_ref(&r), &out, true).is_err());
    assert_eq!(read_records(fs::File::open(&out).unwrap()).unwrap().len(), 2);

    // a fresh file needs no manifest
    let fresh = dir.path().join("fresh.csv");
    write_records(&[r], &fresh, true).unwrap();
    assert!(manifest_path(&fresh).exists());
}

#[test]
fn train_writes_log_and_manifest_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let status = fastdecor()
        .args(["train", "--loss", "vic-proposed", "--d", "16", "--b", "4", "--q", "1", "--epochs", "2"])
        .args(["--classes", "4", "--latent-dim", "8", "--input-dim", "16", "--batch-size", "64"])
        .args(["--seed", "3", "--runs", "2", "--jobs", "2", "--permute", "off"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for seed in [3, 4] {
        let run = dir.path().join(format!("seed-{seed}"));
        let log = fs::read_to_string(run.join("log.csv")).unwrap();
        assert_eq!(log.lines().count(), 3);
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], seed);
        assert_eq!(manifest["reg"]["block"], 4);
        assert_eq!(manifest["reg"]["q"], 1);
        assert_eq!(manifest["reg"]["permute"], false);
        assert_eq!(manifest["train"]["loss"], "vic-proposed");
        assert!(manifest["git_describe"].is_string());
    }
    let bad = fastdecor().args(["train", "--permute", "maybe"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
