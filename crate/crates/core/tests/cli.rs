use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn secbw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secbw")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "seed = 11\n[data]\ntrain_samples = 200\ntest_samples = 40\n[train]\nepochs = 2\nbatch_size = 16\n\
         [eval]\nsweep_delta_w_mhz = [1.0, 0.1]\nuncertainty_fractions = [0.0, 0.1]\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    for cmd in ["gen-data", "train", "evaluate", "sweep-dw", "sweep-uncertainty", "validate"] {
        let o = secbw(&[cmd, "--config", &cfg, "--out", out]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let _: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    }
    for f in [
        "train.ssbw",
        "test.ssbw",
        "model_sl.json",
        "model_usl.json",
        "history_sl.csv",
        "history_usl.csv",
        "evaluate_samples.csv",
        "evaluate_summary.csv",
        "sweep_dw.csv",
        "sweep_uncertainty.csv",
        "run_meta_train.json",
    ] {
        assert!(Path::new(out).join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(Path::new(out).join("history_usl.csv")).unwrap();
    assert!(header.starts_with("step,epoch,mode,normalized_avg_sum_secrecy_rate"));
}

#[test]
fn single_mode_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().to_str().unwrap();
    assert!(secbw(&["gen-data", "--config", &cfg, "--out", out]).status.success());
    let o = secbw(&["train", "--config", &cfg, "--out", out, "--mode", "usl"]);
    assert!(o.status.success());
    assert!(dir.path().join("model_usl.json").exists());
    assert!(!dir.path().join("model_sl.json").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\nnum_users = 0\n").unwrap();
    let o = secbw(&["gen-data", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "config");

    let o = secbw(&["train", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_kind(&o), "io");

    fs::write(dir.path().join("train.ssbw"), b"not a dataset").unwrap();
    let o = secbw(&["train", "--out", out]);
    assert_eq!(o.status.code(), Some(4));

    let cfg = write_config(dir.path());
    assert!(secbw(&["gen-data", "--config", &cfg, "--out", out]).status.success());
    fs::write(dir.path().join("model_sl.json"), "{}").unwrap();
    fs::write(dir.path().join("model_usl.json"), "{}").unwrap();
    let o = secbw(&["evaluate", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(error_kind(&o), "checkpoint");

    let o = secbw(&["validate", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(6));
}
