use std::path::Path;
use std::process::{Command, Output};

use cdit_channel::channel::load_dataset;
use cdit_channel::eval::{read_csv, SampleRow, SweepRow};

const TINY_MODEL: [&str; 10] = [
    "train.model.n_f=8",
    "train.model.n_r=4",
    "train.model.patch_f=4",
    "train.model.patch_r=2",
    "train.model.depth=1",
    "train.model.width=16",
    "train.model.heads=2",
    "train.model.intervals=[2, 4]",
    "train.model.freq_dim=16",
    "train.epochs=1",
];

fn cdit(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdit"));
    cmd.current_dir(dir).env("RUST_LOG", "warn");
    for o in TINY_MODEL {
        cmd.args(["--set", o]);
    }
    cmd.args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cdit(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn every_subcommand_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = |count: &str, seed: &str, out: &str| ok(dir, &["gen-data", "--n-f", "8", "--n-r", "4", "--paths", "3", "--count", count, "--seed", seed, "--out", out]);
    gen("64", "0", "train.safetensors");
    gen("6", "1", "test.safetensors");
    assert_eq!(load_dataset(dir.join("test.safetensors")).unwrap().shape(), (8, 4));

    ok(dir, &["train", "--data", "train.safetensors", "--out", "run"]);
    assert!(dir.join("run/checkpoint.safetensors").exists());
    let log = std::fs::read_to_string(dir.join("run/loss.csv")).unwrap();
    assert!(log.starts_with("step,epoch,loss,lr"));

    let common = ["--test-data", "test.safetensors", "--pilot-interval", "4", "--snr-db", "15"];
    let stdout = ok(dir, &[&["estimate", "--ckpt", "run/checkpoint.safetensors", "--data", "test.safetensors", "--pilot-interval", "4", "--pilot-start", "1", "--snr-db", "15", "--steps", "3", "--eta", "0", "--gamma", "1", "--seed", "2", "--out", "est.safetensors"][..]].concat());
    assert!(stdout.contains("NMSE"));
    assert_eq!(load_dataset(dir.join("est.safetensors")).unwrap().len(), 6);

    ok(dir, &[&["baseline", "--method", "linear"][..], &common, &["--out", "lin.safetensors"]].concat());
    ok(dir, &[&["baseline", "--method", "lmmse", "--fit-data", "train.safetensors"][..], &common].concat());

    ok(dir, &[&["evaluate", "--method", "cdit", "--ckpt", "run/checkpoint.safetensors", "--steps", "2"][..], &common, &["--out", "one"]].concat());
    let rows: Vec<SweepRow> = read_csv(&dir.join("one/sweep.csv")).unwrap();
    assert_eq!(rows.len(), 1);

    ok(
        dir,
        &[
            "--set", "sweep.snr_db=[10.0, 20.0]",
            "--set", "sweep.intervals=[2, 4]",
            "--set", "sweep.steps=[2]",
            "sweep", "--ckpt", "run/checkpoint.safetensors", "--fit-data", "train.safetensors", "--test-data", "test.safetensors", "--out", "sw",
        ],
    );
    let rows: Vec<SweepRow> = read_csv(&dir.join("sw/sweep.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let samples: Vec<SampleRow> = read_csv(&dir.join("sw/samples.csv")).unwrap();
    assert_eq!(samples.len(), rows.len() * 6);

    ok(dir, &["plot", "--input", "sw", "--out", "figs"]);
    for name in cdit_channel::plot::PLOT_FILES {
        let svg = std::fs::read_to_string(dir.join("figs").join(name)).unwrap();
        assert!(svg.contains("<text"), "{name} has no labels");
    }
}

#[test]
fn missing_checkpoint_is_reported_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data", "--n-f", "8", "--n-r", "4", "--count", "2", "--out", "t.safetensors"]);
    let out = cdit(tmp.path(), &["sweep", "--ckpt", "absent.safetensors", "--test-data", "t.safetensors", "--out", "sw"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
    assert!(!tmp.path().join("sw").exists());
}
