use std::path::Path;
use std::process::{Command, Output};

use shift_oracle::data::Matrix;
use shift_oracle::io::{encode_csv, encode_labels, encode_raw_f32};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shift-oracle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_probs(dir: &Path, name: &str, rows: &[[f64; 2]]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, encode_csv(&Matrix::from_rows(rows).unwrap())).unwrap();
    p
}

#[test]
fn atc_without_source_labels_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_probs(dir.path(), "s.csv", &[[0.9, 0.1], [0.3, 0.7]]);
    let out = run(&["estimate", "--source-probs", path(&src), "--target", path(&src)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source-labels"));
}

#[test]
fn ac_alone_needs_no_labels() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_probs(dir.path(), "s.csv", &[[0.9, 0.1]]);
    let tgt = write_probs(dir.path(), "t.csv", &[[0.5, 0.5], [0.5, 0.5]]);
    let out = run(&[
        "estimate",
        "--source-probs",
        path(&src),
        "--target",
        path(&tgt),
        "--method",
        "ac",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["estimates"][0]["predicted_accuracy"].as_f64(), Some(0.5));
    assert!(v["metadata"].get("created_unix").is_none());
}

#[test]
fn raw_and_csv_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [[2.0, -1.0], [0.25, 0.5], [-3.0, 1.5], [1.0, 1.0]];
    let m = Matrix::from_rows(&rows).unwrap();
    let csv = dir.path().join("s.csv");
    let raw = dir.path().join("s.bin");
    let labels = dir.path().join("y.csv");
    std::fs::write(&csv, encode_csv(&m)).unwrap();
    std::fs::write(&raw, encode_raw_f32(&m).unwrap()).unwrap();
    std::fs::write(&labels, encode_labels(&[0, 1, 0, 1])).unwrap();
    let go = |src: &Path| {
        let out = run(&[
            "estimate",
            "--source-logits",
            path(src),
            "--source-labels",
            path(&labels),
            "--target",
            path(src),
            "--calibrate",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        // target names differ; everything else must not
        for e in v["estimates"].as_array_mut().unwrap() {
            e["target"] = serde_json::Value::Null;
        }
        v
    };
    assert_eq!(go(&csv), go(&raw));
}

#[test]
fn toy_without_spurious_weight_is_always_right() {
    let out = run(&["toy", "--w-spr", "0", "--n", "2000", "--p-grid", "0,0.5,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p_target,true_acc,atc_mc,atc_ne,ac,doc,im,gde"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1], 1.0);
        assert_eq!(cols[2], 1.0);
        assert_eq!(cols[3], 1.0);
    }
}

#[test]
fn negative_invariant_weight_is_rejected() {
    let out = run(&["toy", "--w-inv", "-1", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_seed_reruns_are_identical_and_seeds_matter() {
    let a = run(&["impossibility", "--alpha", "0.7", "--beta", "0.3", "--samples", "5000", "--seed", "1"]);
    let b = run(&["impossibility", "--alpha", "0.7", "--beta", "0.3", "--samples", "5000", "--seed", "1"]);
    let c = run(&["impossibility", "--alpha", "0.7", "--beta", "0.3", "--samples", "5000", "--seed", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["E1"].as_f64().unwrap() > 0.0);
    assert!(v["stderrs"]["diff"].as_f64().unwrap() > 0.0);
}

#[test]
fn thread_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_probs(dir.path(), "s.csv", &[[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.45, 0.55]]);
    let labels = dir.path().join("y.csv");
    std::fs::write(&labels, encode_labels(&[0, 1, 1, 0])).unwrap();
    let targets: Vec<_> = (0..4)
        .map(|i| write_probs(dir.path(), &format!("t{i}.csv"), &[[0.7, 0.3], [0.52 + 0.1 * i as f64, 0.48 - 0.1 * i as f64]]))
        .collect();
    let go = |threads: &str| {
        let mut args = vec!["estimate", "--source-probs", path(&src), "--source-labels", path(&labels)];
        for t in &targets {
            args.extend(["--target", path(t)]);
        }
        args.extend(["--threads", threads]);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    assert_eq!(go("1"), go("4"));
}
