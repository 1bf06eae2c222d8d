use std::path::Path;
use std::process::{Command, Output};

const LUMEN: &str = env!("CARGO_BIN_EXE_lumen");

fn lumen(dir: &Path, args: &[&str]) -> Output {
    Command::new(LUMEN).args(args).current_dir(dir).output().expect("spawn lumen")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lumen(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_dataset(dir: &Path) {
    ok(dir, &["gen-epw", "--out", "w.epw", "--seed", "3"]);
    ok(dir, &["gen-data", "--epw", "w.epw", "--res", "16x8", "--out", "data"]);
}

#[test]
fn workflow_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    let index = std::fs::read_to_string(d.join("data/index.csv")).unwrap();
    assert!(index.starts_with("timestamp,al,az,dni,dhi,interior,sky,sun\n"));
    std::fs::write(
        d.join("run.json"),
        r#"{"train": {"architecture": {"branch_a": [8], "branch_b": [4], "head": [8]}, "max_epochs": 2}}"#,
    )
    .unwrap();
    ok(d, &["select", "--dataset", "data", "--scheme", "kmeans", "--k", "20", "--out", "s.json"]);
    ok(d, &["train", "--dataset", "data", "--schedule", "s.json", "--config", "run.json", "--out", "m.model.json"]);
    let history = std::fs::read_to_string(d.join("m.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,train_loss,val_loss,lr,batch_rows\n"));
    ok(d, &[
        "evaluate", "--model", "m.model.json", "--dataset", "data", "--schedule", "s.json",
        "--n-test", "10", "--report", "r.json", "--scatter", "sc",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["aggregates"]["n_samples"], 10);
    assert_eq!(report["aggregates"]["n_dgp_pairs"], 100);
    assert!(std::fs::read_to_string(d.join("sc_dgp.csv")).unwrap().starts_with("sample,yaw,dgp_truth,dgp_pred\n"));
    assert!(std::fs::read_to_string(d.join("sc_rammg.csv")).unwrap().starts_with("sample,rammg_truth,rammg_pred\n"));

    let first = index.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    ok(d, &["predict", "--model", "m.model.json", "--dataset", "data", "--timestamps", &first, "--out", "pred"]);
    let pred = format!("pred/{first}_pred.hdr");
    assert!(d.join(&pred).exists());

    let dgp = ok(d, &["dgp", "--in", &pred, "--yaws", "0:360:90"]);
    let text = String::from_utf8(dgp.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("yaw,ev,dgp"));
    assert_eq!(text.lines().count(), 5);
    ok(d, &["fisheye", "--in", &pred, "--yaw", "-30", "--size", "32", "--out", "f.hdr"]);
    ok(d, &["falsecolor", "--in", &pred, "--out", "f.ppm"]);
    assert!(std::fs::read(d.join("f.ppm")).unwrap().starts_with(b"P6\n16 8\n255\n"));
    ok(d, &["stats", "--dataset", "data", "--bins", "4", "--out", "dist.csv"]);
    let dist = std::fs::read_to_string(d.join("dist.csv")).unwrap();
    assert_eq!(dist.lines().count(), 17);
}

#[test]
fn deterministic_training_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    std::fs::write(d.join("t.json"), r#"{"architecture": {"branch_a": [8, 8], "branch_b": [4], "head": [8]}, "max_epochs": 2, "seed": 9}"#).unwrap();
    ok(d, &["select", "--dataset", "data", "--scheme", "month", "--month", "4", "--out", "s.json"]);
    for out in ["a.model.json", "b.model.json"] {
        ok(d, &["train", "--dataset", "data", "--schedule", "s.json", "--config", "t.json", "--out", out, "--deterministic"]);
    }
    assert_eq!(std::fs::read(d.join("a.model.json")).unwrap(), std::fs::read(d.join("b.model.json")).unwrap());
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lumen(d, &["--help"])), 0);
    assert_eq!(code(&lumen(d, &["bogus"])), 1);
    assert_eq!(code(&lumen(d, &["dgp", "--in", "x.hdr", "--yaws", "0:360:0"])), 2);
    std::fs::write(d.join("bad.hdr"), b"not an image").unwrap();
    assert_eq!(code(&lumen(d, &["rammg", "--in", "bad.hdr"])), 2);
    assert_eq!(code(&lumen(d, &["gen-data", "--epw", "w.epw", "--res", "oops", "--out", "x"])), 1);
    small_dataset(d);
    assert_eq!(code(&lumen(d, &["select", "--dataset", "data", "--scheme", "kmeans", "--out", "s.json"])), 1);
    assert_eq!(code(&lumen(d, &["select", "--dataset", "data", "--scheme", "kmeans", "--k", "0", "--out", "s.json"])), 1);
    std::fs::write(d.join("run.json"), r#"{"train": {"max_epoch": 2}}"#).unwrap();
    assert_eq!(code(&lumen(d, &["gen-data", "--config", "run.json"])), 2);
}

#[test]
fn rammg_of_constant_panorama_prints_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let map = lumen_core::hdrio::LuminanceMap::uniform(32, 16, 250.0).unwrap();
    lumen_core::dataset::write_luminance_hdr(&d.join("c.hdr"), &map).unwrap();
    let out = ok(d, &["rammg", "--in", "c.hdr", "--levels", "5"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.0");
}
