use std::path::Path;
use std::process::{Command, Output};

use dacdr::model::Checkpoint;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dacdr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exit code")
}

fn stdout(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Small dataset plus a two-epoch checkpoint.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    stdout(dir.path(), &["gen-data", "--users", "300", "--target-domains", "2"]);
    stdout(dir.path(), &["train", "--epochs", "2", "--report", "train.json"]);
    dir
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["--help"]), 0);
    assert_eq!(code(dir.path(), &["--version"]), 0);
    assert_eq!(code(dir.path(), &["no-such-command"]), 2);
}

#[test]
fn usage_errors_exit_two() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(d, &["gen-data", "--overlap", "0"]), 2);
    assert_eq!(code(d, &["train", "--loss", "mse"]), 2);
    assert_eq!(code(d, &["train", "--no-such-key", "1"]), 2);
    assert_eq!(code(d, &["eval", "--checkpoint", "missing.ckpt"]), 2);
    assert_eq!(code(d, &["finetune", "--base", "missing.ckpt"]), 2);
    assert_eq!(code(d, &["eval", "--beta", "0.5"]), 2);
    assert_eq!(code(d, &["gradcheck", "--op", "bogus"]), 2);
}

#[test]
fn missing_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["train", "--interactions", "nothing.tsv"]), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "users = 200\nout = fromfile\n").unwrap();
    stdout(d, &["gen-data", "--config", "run.cfg", "--out", "fromflag"]);
    assert!(d.join("fromflag/interactions.tsv").is_file());
    assert!(!d.join("fromfile").exists());
    let echo = std::fs::read_to_string(d.join("fromflag/synth.cfg")).unwrap();
    assert!(echo.contains("users = 200"));
}

#[test]
fn ablation_variant_trains_and_reports_config() {
    let dir = workspace();
    let d = dir.path();
    stdout(d, &["train", "--variant", "no_da_ia", "--epochs", "1", "--checkpoint", "plain.ckpt"]);
    let ck = Checkpoint::read(&d.join("plain.ckpt")).unwrap();
    assert_eq!(ck.variant, "no_da_ia");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("train.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], "0");
    assert_eq!(report["config"]["variant"], "dacdr");
}

#[test]
fn eval_is_repeatable_and_sweeps_four_ablation_rows() {
    let dir = workspace();
    let d = dir.path();
    stdout(d, &["eval", "--report", "e.json"]);
    let first = std::fs::read(d.join("e.json")).unwrap();
    stdout(d, &["eval", "--report", "e.json"]);
    assert_eq!(first, std::fs::read(d.join("e.json")).unwrap());

    let table = stdout(d, &["eval", "--sweep", "ablation", "--epochs", "1"]);
    let rows: Vec<&str> = table
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .filter(|w| ["dacdr", "no_da", "no_ia", "no_da_ia"].contains(w))
        .collect();
    assert_eq!(rows, ["dacdr", "no_da", "no_ia", "no_da_ia"]);
    // The training report must survive an eval run.
    let train = std::fs::read_to_string(d.join("train.json")).unwrap();
    assert!(train.contains("\"command\": \"train\""));
}

#[test]
fn beta_sweep_writes_three_reports() {
    let dir = workspace();
    let d = dir.path();
    stdout(d, &["eval", "--sweep-beta", "0.2,0.5,0.8", "--epochs", "1", "--report", "sweep.json"]);
    for beta in ["0.2", "0.5", "0.8"] {
        let text = std::fs::read_to_string(d.join(format!("sweep.beta{beta}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["split"]["beta"].as_f64().unwrap().to_string(), beta);
        assert!(v["metrics"]["auc"].is_number());
    }
}

#[test]
fn finetune_with_zero_epochs_keeps_base_params() {
    let dir = workspace();
    let d = dir.path();
    stdout(
        d,
        &[
            "finetune",
            "--base",
            "model.ckpt",
            "--interactions",
            "data/interactions_tgt2.tsv",
            "--target",
            "tgt2",
            "--checkpoint",
            "ft.ckpt",
            "--epochs",
            "0",
        ],
    );
    let base = Checkpoint::read(&d.join("model.ckpt")).unwrap();
    let ft = Checkpoint::read(&d.join("ft.ckpt")).unwrap();
    for name in base.params.names() {
        let a = base.params.get(name).unwrap();
        let b = ft.params.get(name).unwrap();
        let n = a.data().len();
        // Appended rows aside, every stored value is untouched.
        assert_eq!(&b.data()[..n], a.data(), "{name}");
    }
    // Refuses to overwrite its own base.
    assert_eq!(
        code(
            d,
            &[
                "finetune",
                "--base",
                "model.ckpt",
                "--interactions",
                "data/interactions_tgt2.tsv",
                "--target",
                "tgt2",
                "--checkpoint",
                "model.ckpt",
            ],
        ),
        2
    );
}

#[test]
fn gradcheck_filters_by_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(dir.path(), &["gradcheck", "--op", "softmax"]);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| matches!(l.split_whitespace().last(), Some("pass" | "FAIL")))
        .collect();
    assert_eq!(rows.len(), 1, "{out}");
    assert!(rows[0].starts_with("softmax"));
}

#[test]
fn rating_pipeline_reports_mae() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(d, &["gen-data", "--users", "300", "--output-mode", "rating"]);
    stdout(d, &["train", "--output-mode", "rating", "--epochs", "1"]);
    let out = stdout(d, &["eval", "--report", "r.json"]);
    assert!(out.contains("mae"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(v["metrics"]["mae"].as_f64().unwrap() >= 0.0);
    assert!(v["metrics"]["auc"].is_null());
}
