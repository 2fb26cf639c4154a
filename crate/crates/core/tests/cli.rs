// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equilibria::cli::{digest_file, RunManifest, MANIFEST_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_equilibria"))
}

fn run(cwd: &Path, args: &[&str]) -> Output {
    bin().current_dir(cwd).args(args).output().expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = run(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut found = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                found.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    found
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

/// Every file but the manifest is listed, and each digest matches the bytes on disk.
fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let listed: BTreeSet<PathBuf> = m.outputs.iter().map(|d| PathBuf::from(&d.path)).collect();
    let mut on_disk = files_under(dir);
    on_disk.remove(Path::new(MANIFEST_FILE));
    assert_eq!(listed, on_disk);
    for d in &m.outputs {
        assert_eq!(digest_file(&dir.join(&d.path), d.path.clone()).unwrap(), *d);
    }
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(tmp.path(), &["gen-data", "--task", "identity", "--seed", "7", "--out", out]);
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let files = files_under(&a);
    assert!(files.contains(Path::new("train/inputs.bin")));
    for f in files.iter().filter(|f| f.as_os_str() != MANIFEST_FILE) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f:?}");
    }
    assert_eq!(manifest(&a).outputs, manifest(&b).outputs);
    assert_manifest_complete(&a);
    // Nothing written outside --out.
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 2);
}

#[test]
fn gradcheck_implicit_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["gradcheck", "--model", "implicit", "--trials", "20", "--tol", "1e-4"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["trials"], 20);
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0, "no --out, no files");
}

#[test]
fn failing_gradcheck_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    // No finite-difference comparison gets this close.
    let out = run(tmp.path(), &["gradcheck", "--model", "mlp", "--trials", "2", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(equilibria::cli::EXIT_CHECK_FAILED));
}

#[test]
fn train_sweep_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(cwd, &["gen-data", "--task", "identity", "--samples", "500", "--test-samples", "200", "--seed", "1", "--out", "data"]);
    let train = ["train", "--data", "data", "--epochs", "2", "--quiet"];
    ok(cwd, &[&train[..], &["--out", "m1"]].concat());
    ok(cwd, &[&train[..], &["--out", "m2"]].concat());
    assert_eq!(fs::read(cwd.join("m1/model.ckpt")).unwrap(), fs::read(cwd.join("m2/model.ckpt")).unwrap());
    assert_manifest_complete(&cwd.join("m1"));
    let m = manifest(&cwd.join("m1"));
    assert_eq!(m.inputs.len(), 3, "dataset files are digested");
    assert_eq!(m.seeds["init"], 0);

    ok(cwd, &["sweep", "--model-file", "m1/model.ckpt", "--shifts", "10,20,40,80", "--test-samples", "100", "--out", "s"]);
    let csv = fs::read_to_string(cwd.join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("kappa,distribution,mse"));
    assert!(lines[4].starts_with("80.0,"));
    assert_manifest_complete(&cwd.join("s"));

    let out = ok(cwd, &["eval", "--model-file", "m1/model.ckpt", "--data", "data/test", "--metrics", "mse,rmse", "--out", "e"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (mse, rmse) = (v["metrics"]["mse"].as_f64().unwrap(), v["metrics"]["rmse"].as_f64().unwrap());
    assert!((rmse * rmse - mse).abs() < 1e-9 * mse.max(1.0));
    assert_eq!(v["samples"], 200);
    assert_manifest_complete(&cwd.join("e"));

    let mut top: Vec<String> = fs::read_dir(cwd).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    top.sort();
    assert_eq!(top, ["data", "e", "m1", "m2", "s"]);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    fs::write(
        cwd.join("run.toml"),
        "[task]\nname = \"add\"\nsamples = 64\n\n[model]\nkind = \"mlp\"\nmlp_hidden = [4]\n\n[train]\nepochs = 3\nlearning_rate = 0.01\n\n[optimizer]\nkind = \"sgd\"\nmomentum = 0.5\n",
    )
    .unwrap();
    ok(cwd, &["train", "--config", "run.toml", "--epochs", "1", "--quiet", "--out", "o"]);
    let m = manifest(&cwd.join("o"));
    assert_eq!(m.config["train"]["epochs"], 1);
    assert_eq!(m.config["train"]["learning_rate"], 0.01);
    assert_eq!(m.config["train"]["optimizer"]["kind"], "sgd");
    assert_eq!(m.config["model"]["mlp_hidden"], serde_json::json!([4]));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(cwd.join("o/run.json")).unwrap()).unwrap();
    assert_eq!(run["epochs"].as_array().unwrap().len(), 1);
    assert_eq!(run["samples"], 64);
}

#[test]
fn spiky_gen_data_writes_series_and_windows() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data", "--task", "spiky", "--window", "20", "--seed", "3", "--out", "d"]);
    let d = tmp.path().join("d");
    let train = fs::read_to_string(d.join("series/train.csv")).unwrap();
    assert_eq!(train.lines().count(), 7001);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("train/dataset.json")).unwrap()).unwrap();
    assert_eq!(meta["samples"], 7000 - 20);
    assert_manifest_complete(&d);
}

#[test]
fn ablate_writes_paired_reports() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &[
            "ablate", "--task", "sub", "--samples", "64", "--test-samples", "50", "--state-dim", "4", "--epochs", "1",
            "--shifts", "0,100", "--seeds", "0,1", "--out", "ab",
        ],
    );
    let d = tmp.path().join("ab");
    let csv = fs::read_to_string(d.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(d.join("seed-1/without_feedback.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("seed-0/ablation.json")).unwrap()).unwrap();
    assert_eq!(report["config_diff"], serde_json::json!(["feedback"]));
    assert_manifest_complete(&d);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let code = |args: &[&str]| run(cwd, args).status.code();
    assert_eq!(code(&["train", "--task", "nope", "--out", "x"]), Some(7));
    assert_eq!(code(&["train", "--bogus"]), Some(6));
    assert_eq!(code(&["eval", "--model-file", "missing.ckpt", "--data", "d"]), Some(10));
    assert_eq!(code(&["train", "--task", "identity", "--batch-size", "0", "--out", "x"]), Some(2));
    assert_eq!(code(&["ablate", "--task", "identity", "--model", "mlp", "--out", "x"]), Some(6));
    fs::write(cwd.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(code(&["train", "--task", "identity", "--config", "bad.toml", "--out", "x"]), Some(8));
    assert_eq!(code(&["--help"]), Some(0));
    assert!(!cwd.join("x").exists(), "failed runs leave no output directory");
}
