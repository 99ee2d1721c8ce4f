//! End-to-end runs of the `spectra` binary: determinism across worker
//! counts, checkpoint/resume equivalence, and refusal paths.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spectra")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("spectra_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_wegner_config(dir: &Path, n_samples: u64) -> PathBuf {
    let path = dir.join("wegner.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "schema_version": 1,
  "experiment": "wegner",
  "disorder": {{"kind": "uniform_interval", "alpha0": 0.5, "beta0": 1.5}},
  "master_seed": 42,
  "n_samples": {n_samples},
  "n_sites": 48,
  "energy": 1.0,
  "epsilons": [0.001, 0.0001],
  "checkpoint_interval": 200
}}"#
        ),
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn summaries_byte_identical_across_worker_counts() {
    let dir = scratch("workers");
    let config = write_wegner_config(&dir, 600);
    let out1 = dir.join("w1");
    let out2 = dir.join("w2");
    let s1 = run(&[
        "wegner",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(s1.status.success(), "{}", String::from_utf8_lossy(&s1.stderr));
    let s2 = run(&[
        "wegner",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert!(s2.status.success());
    assert_eq!(read(&out1.join("summary.csv")), read(&out2.join("summary.csv")));
    assert_eq!(
        read(&out1.join("results.jsonl")),
        read(&out2.join("results.jsonl"))
    );
}

#[test]
fn run_twice_with_same_seed_is_byte_identical() {
    let dir = scratch("reruns");
    let config = write_wegner_config(&dir, 300);
    for out in ["a", "b"] {
        let s = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.join(out).to_str().unwrap(),
            "--set",
            "n_samples=100",
            "--seed",
            "42",
        ]);
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    }
    assert_eq!(
        read(&dir.join("a/summary.csv")),
        read(&dir.join("b/summary.csv"))
    );
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let dir = scratch("resume");
    let config = write_wegner_config(&dir, 600);
    let full = dir.join("full");
    let s = run(&[
        "wegner",
        "--config",
        config.to_str().unwrap(),
        "--out",
        full.to_str().unwrap(),
    ]);
    assert!(s.status.success());

    // simulate an interruption at one completed chunk (of three)
    let cut = dir.join("cut");
    std::fs::create_dir_all(&cut).unwrap();
    let checkpoint = read(&full.join("checkpoint.jsonl"));
    let first_line = checkpoint.lines().next().unwrap();
    std::fs::write(cut.join("checkpoint.jsonl"), format!("{first_line}\n")).unwrap();
    let mut manifest: serde_json::Value =
        serde_json::from_str(&read(&full.join("manifest.json"))).unwrap();
    manifest["completed_chunks"] = 1.into();
    manifest["finished_unix"] = serde_json::Value::Null;
    std::fs::write(
        cut.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();

    let s = run(&["resume", cut.join("manifest.json").to_str().unwrap()]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    assert_eq!(read(&full.join("summary.csv")), read(&cut.join("summary.csv")));
    assert_eq!(
        read(&full.join("results.jsonl")),
        read(&cut.join("results.jsonl"))
    );
    assert_eq!(
        read(&full.join("checkpoint.jsonl")),
        read(&cut.join("checkpoint.jsonl"))
    );

    // resume of a completed run is a no-op with exit 0
    let s = run(&["resume", cut.join("manifest.json").to_str().unwrap()]);
    assert!(s.status.success());
    assert!(String::from_utf8_lossy(&s.stdout).contains("already complete"));
}

#[test]
fn resume_refuses_edited_config() {
    let dir = scratch("stale");
    let config = write_wegner_config(&dir, 200);
    let out = dir.join("out");
    let s = run(&[
        "wegner",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(s.status.success());

    let mut manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    manifest["completed_chunks"] = 0.into();
    manifest["finished_unix"] = serde_json::Value::Null;
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string(&manifest).unwrap(),
    )
    .unwrap();
    // edit the config the manifest points at
    write_wegner_config(&dir, 999);
    let s = run(&["resume", out.join("manifest.json").to_str().unwrap()]);
    assert!(!s.status.success());
    assert!(
        String::from_utf8_lossy(&s.stderr).contains("refusing to resume"),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
}

#[test]
fn unknown_experiment_name_lists_valid_names() {
    let dir = scratch("badname");
    let path = dir.join("bad.json");
    std::fs::write(
        &path,
        r#"{"schema_version":1,"experiment":"frobnicate",
           "disorder":{"kind":"uniform_interval","alpha0":0.5,"beta0":1.5},
           "master_seed":1}"#,
    )
    .unwrap();
    let s = run(&["run", "--config", path.to_str().unwrap()]);
    assert!(!s.status.success());
    let err = String::from_utf8_lossy(&s.stderr);
    assert!(err.contains("wegner") && err.contains("minami"), "{err}");
}

#[test]
fn subcommand_config_mismatch_refused() {
    let dir = scratch("mismatch");
    let config = write_wegner_config(&dir, 10);
    let s = run(&["minami", "--config", config.to_str().unwrap()]);
    assert!(!s.status.success());
    assert!(String::from_utf8_lossy(&s.stderr).contains("subcommand"));
}

#[test]
fn determinants_csv_schema_and_tolerance() {
    let dir = scratch("dets");
    let path = dir.join("dets.json");
    std::fs::write(
        &path,
        r#"{"schema_version":1,"experiment":"check-determinants",
           "disorder":{"kind":"uniform_interval","alpha0":0.5,"beta0":1.5},
           "master_seed":1,"n_draws":500}"#,
    )
    .unwrap();
    let out = dir.join("out");
    let s = run(&[
        "check-determinants",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(s.status.success());
    let csv = read(&out.join("summary.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "case,draws,max_rel_err");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "500");
        assert!(cols[2].parse::<f64>().unwrap() <= 1e-9);
    }
}
