use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use attractorlab::sampling::store::{load_dataset, Manifest, MANIFEST};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attractorlab"))
        .args(args)
        .env_remove("ATTRACTORLAB_SEED")
        .output()
        .expect("spawn attractorlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn kac_prints_budget() {
    let o = run(&["kac", "--epsilon", "0.01", "--dim", "2.06"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "13183");
}

#[test]
fn kac_reports_prefactor_for_target() {
    let o = run(&["kac", "--epsilon", "0.01", "--dim", "2.06", "--target", "27000"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("prefactor for 27000 samples: 2.048"), "{}", stdout(&o));
}

#[test]
fn gen_data_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let o = run(&["gen-data", "--strategy", "fixed-point", "--out", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&d);
    assert_eq!(m.chunks.len(), 9);
    assert_eq!(m.total_samples, 27_000);
    let ds = load_dataset(&d).unwrap();
    assert_eq!(ds.total_samples(), 27_000);
    assert!(d.join("repro.json").is_file());
}

#[test]
fn gen_data_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = run(&["gen-data", "--strategy", "random", "--seed", "5", "--out", d.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn seed_env_is_last_resort() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_attractorlab"))
        .args(["gen-data", "--strategy", "random", "--out", a.to_str().unwrap()])
        .env("ATTRACTORLAB_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = run(&["gen-data", "--strategy", "random", "--seed", "5", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(manifest(&a).fingerprint, manifest(&b).fingerprint);
}

#[test]
fn split_with_bad_chunk_count_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["gen-data", "--strategy", "split", "--chunks", "7", "--out", tmp.path().join("d").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = run(&["kac", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["kac", "--epsilon", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_merged_with_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, "seed = 9\n[dataset]\nstrategy = \"short\"\nshort_len = 500\n").unwrap();
    let d = tmp.path().join("d");
    let o = run(&["gen-data", "--config", cfg.to_str().unwrap(), "--short-len", "400", "--out", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&d);
    assert_eq!(m.total_samples, 400);
    assert_eq!(m.chunks.len(), 1);
}

#[test]
fn train_evaluate_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_owned();
    let o = run(&["gen-data", "--strategy", "short", "--short-len", "400", "--seed", "3", "--out", &p("data")]);
    assert!(o.status.success());
    let o = run(&[
        "train", "--data", &p("data"), "--epochs", "2", "--hidden", "8", "--seed", "3", "--out", &p("model"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("model/model.atlm").is_file());
    let o = run(&[
        "evaluate",
        "--model",
        &p("model/model.atlm"),
        "--horizon",
        "200",
        "--d2-steps",
        "6000",
        "--lambda1",
        "0.906",
        "--seed",
        "3",
        "--out",
        &p("eval"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["eval.json", "prediction.csv", "truth.csv", "repro.json"] {
        assert!(tmp.path().join("eval").join(f).is_file(), "{f}");
    }

    for dir in ["model", "eval"] {
        let o = run(&["replay", "--repro", &p(dir), "--out", &p(&format!("{dir}-again"))]);
        assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("reproduced bit-exactly"));
    }
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert!(run(&["kac", "--out", d.to_str().unwrap()]).status.success());
    let mut r: serde_json::Value = serde_json::from_slice(&fs::read(d.join("repro.json")).unwrap()).unwrap();
    r["artifacts"]["kac.json"] = serde_json::Value::String("0".repeat(64));
    fs::write(d.join("repro.json"), serde_json::to_vec(&r).unwrap()).unwrap();
    let o = run(&["replay", "--repro", d.to_str().unwrap(), "--out", tmp.path().join("e").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("differs: kac.json"));
}

#[test]
fn ensemble_then_tsne() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_owned();
    let o = run(&[
        "ensemble", "--models", "8", "--strategy", "ergodic,random", "--memory", "zero", "--save-models",
        "--total", "900", "--chunk-len", "100", "--epochs", "1", "--hidden", "4", "--horizon", "100",
        "--d2-steps", "5000", "--lambda1", "0.906", "--seed", "1", "--out", &p("ens"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "summary.csv", "d2_histogram.csv", "ergodic-zero/report.json", "random-zero/models.csv"] {
        assert!(tmp.path().join("ens").join(f).is_file(), "{f}");
    }
    assert!(tmp.path().join("ens/random-zero/models/model_007.atlm").is_file());
    let o = run(&["tsne", "--ensemble", &p("ens"), "--perplexity", "5", "--iterations", "300", "--out", &p("emb")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("emb/embedding.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model_id,strategy,gamma1,gamma2,d2_error");
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn every_subcommand_parses() {
    for cmd in ["gen-data", "train", "evaluate", "ensemble", "d2", "lyapunov", "kac", "tsne", "replay"] {
        let o = run(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
