//! End-to-end CLI tests against the built binary: subcommand wiring, file
//! outputs, and exit codes (0 ok, 1 config error, 2 I/O error).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stepgrpo")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn stepgrpo")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(
        &path,
        "total_steps = 3\nrollout_batch = 2\ngroup_size = 3\nseed = 21\n",
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let out = run(
        &["train", "--config", cfg.to_str().unwrap(), "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "train failed: {out:?}");
    assert!(dir.path().join("run/metrics.jsonl").exists());

    let out = run(
        &[
            "eval",
            "--checkpoint",
            "run/ckpt-final.txt",
            "--tasks",
            "100:5:2",
            "--out",
            "evaldir",
            "--samples",
            "2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "eval failed: {out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall: accuracy"), "{stdout}");
    assert!(dir.path().join("evaldir/traces.jsonl").exists());
    assert!(dir.path().join("evaldir/summary.json").exists());

    let out = run(
        &[
            "rollout",
            "--checkpoint",
            "run/ckpt-final.txt",
            "--task-seed",
            "42",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "rollout failed: {out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ground truth"), "{stdout}");
    assert!(stdout.contains("completion ("), "{stdout}");

    // no-gate variant prints a plain trace
    let out = run(
        &[
            "rollout",
            "--checkpoint",
            "run/ckpt-final.txt",
            "--task-seed",
            "42",
            "--no-gate",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(!String::from_utf8_lossy(&out.stdout).contains("gate @"));

    // analyzer subcommands over the run and eval outputs
    let out = run(
        &[
            "analyze",
            "cr",
            "--model-dir",
            "evaldir",
            "--vanilla-dir",
            "evaldir",
            "--csv",
            "cr.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "analyze cr failed: {out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("compression rate"), "{stdout}");
    assert!(stdout.contains("1.0000"), "same-dir CR must be 1: {stdout}");
    let csv = std::fs::read_to_string(dir.path().join("cr.csv")).unwrap();
    assert!(csv.starts_with("task_key,avg_tokens_model,avg_tokens_vanilla,ratio"));

    let out = run(
        &["analyze", "density", "--traces", "run/traces.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "analyze density failed: {out:?}");

    let out = run(
        &[
            "analyze",
            "composition",
            "--traces",
            "run/traces.jsonl",
            "--threshold",
            "0.2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "analyze composition failed: {out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("proxy"));

    let out = run(
        &[
            "analyze",
            "dynamics",
            "--metrics",
            "run/metrics.jsonl",
            "run/metrics.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "analyze dynamics failed: {out:?}");
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "deltaa = 0.5\n").unwrap();
    let out = run(&["train", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deltaa"));

    std::fs::write(&bad, "delta = 1.5\n").unwrap();
    let out = run(&["train", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = run(
        &[
            "eval",
            "--checkpoint",
            "nope.txt",
            "--tasks",
            "not-a-spec",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "bad task spec is a config error"
    );
}

#[test]
fn io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--config", "missing.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = run(
        &[
            "eval",
            "--checkpoint",
            "missing-ckpt.txt",
            "--tasks",
            "1:2:3",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // malformed metrics line reports its number and exits 2
    let metrics = dir.path().join("m.jsonl");
    std::fs::write(&metrics, "{not json\n").unwrap();
    let out = run(&["analyze", "dynamics", "--metrics", "m.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1:"));
}

#[test]
fn analyze_text_mode_works() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cot.txt"),
        "compute the total. Wait recheck the sum. Alternatively use a table.\nshort answer here.\n",
    )
    .unwrap();
    let out = run(
        &[
            "analyze",
            "composition",
            "--traces",
            "cot.txt",
            "--text",
            "--triggers",
            "Wait,Alternatively",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let out = run(
        &["analyze", "density", "--traces", "cot.txt", "--text"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
}
