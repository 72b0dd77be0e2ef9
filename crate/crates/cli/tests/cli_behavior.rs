//! CLI contract tests: exit codes, config precedence, manifest sidecars,
//! and partial-failure reporting.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_webstar"))
}

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let output = bin().current_dir(dir).args(args).output().expect("spawn");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).to_string(),
        String::from_utf8_lossy(&output.stderr).to_string(),
    )
}

fn setup_pipeline(dir: &Path) {
    let (code, _, err) = run(dir, &["gen-site", "--seed", "3", "--pages", "12", "--tasks", "4", "--out", "site.json"]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = run(dir, &["collect", "--site", "site.json", "--rollouts", "2", "--seed", "1", "--out", "traj.jsonl"]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(dir.path(), &["definitely-not-a-subcommand"]);
    assert_eq!(code, 1);
    let (code, _, _) = run(dir.path(), &["gen-site", "--frobnicate"]);
    assert_eq!(code, 1);
    // Semantic usage error: oracle backend without a site.
    let dir2 = tempfile::tempdir().unwrap();
    setup_pipeline(dir2.path());
    let (code, _, err) = run(dir2.path(), &["grade", "--in", "traj.jsonl", "--backend", "oracle", "--out", "g.jsonl"]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("--site"));
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).0, 0);
    assert_eq!(run(dir.path(), &["--version"]).0, 0);
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Missing input file.
    let (code, _, _) = run(dir.path(), &["stats", "--in", "nope.jsonl", "--out", "s.json"]);
    assert_eq!(code, 2);
    // Malformed line.
    std::fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    let (code, _, err) = run(dir.path(), &["stats", "--in", "bad.jsonl", "--out", "s.json"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
    // Wrong schema version.
    std::fs::write(dir.path().join("v9.jsonl"), "{\"schema_version\":\"webstar/9\"}\n").unwrap();
    let (code, _, err) = run(dir.path(), &["stats", "--in", "v9.jsonl", "--out", "s.json"]);
    assert_eq!(code, 2);
    assert!(err.contains("webstar/9"), "{err}");
}

#[test]
fn insufficient_reward_class_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    let (code, _, err) = run(dir.path(), &["grade", "--in", "traj.jsonl", "--backend", "oracle", "--site", "site.json", "--out", "graded.jsonl"]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = run(dir.path(), &["export-reward", "--in", "graded.jsonl", "--n", "100000", "--seed", "1", "--out", "r.jsonl"]);
    assert_eq!(code, 2);
    assert!(err.contains("class"), "{err}");
}

#[test]
fn unreachable_remote_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    std::fs::write(
        dir.path().join("cfg.toml"),
        "[backend]\nurl = \"http://127.0.0.1:9\"\nmodel = \"m\"\ntimeout_secs = 2\n",
    )
    .unwrap();
    // Keep just one short trajectory so the retry budget stays quick.
    let trajs = std::fs::read_to_string(dir.path().join("traj.jsonl")).unwrap();
    let first = trajs.lines().next().unwrap();
    std::fs::write(dir.path().join("one.jsonl"), format!("{first}\n")).unwrap();
    let (code, _, err) = run(
        dir.path(),
        &["--config", "cfg.toml", "grade", "--in", "one.jsonl", "--backend", "remote", "--site", "site.json", "--images", "shots", "--out", "g.jsonl"],
    );
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("backend unavailable"), "{err}");
}

#[test]
fn partial_failures_exit_4_with_report() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    // A trajectory whose instruction the oracle does not know fails
    // per-step without aborting the rest of the corpus.
    let trajs = std::fs::read_to_string(dir.path().join("traj.jsonl")).unwrap();
    let mut lines: Vec<String> = trajs.lines().map(str::to_string).collect();
    let mut foreign: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    foreign["id"] = "foreign".into();
    foreign["instruction"] = "Find the value of \"unknown-key\" and submit it with finished.".into();
    lines.push(foreign.to_string());
    std::fs::write(dir.path().join("mixed.jsonl"), lines.join("\n") + "\n").unwrap();

    let (code, out, err) = run(
        dir.path(),
        &["grade", "--in", "mixed.jsonl", "--backend", "oracle", "--site", "site.json", "--out", "graded.jsonl"],
    );
    assert_eq!(code, 4, "{out}{err}");
    assert!(err.contains("report at"), "{err}");
    let report = std::fs::read_to_string(dir.path().join("graded.failures.json")).unwrap();
    let failures: Vec<serde_json::Value> = serde_json::from_str(&report).unwrap();
    assert!(!failures.is_empty());
    assert!(failures.iter().all(|f| f["trajectory_id"] == "foreign"));
    // The graded output still carries every other trajectory fully graded.
    let graded = std::fs::read_to_string(dir.path().join("graded.jsonl")).unwrap();
    assert_eq!(graded.lines().count(), lines.len());
}

#[test]
fn config_precedence_flags_over_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["gen-site", "--seed", "3", "--pages", "12", "--tasks", "4", "--out", "site.json"]);
    std::fs::write(dir.path().join("cfg.toml"), "seed = 100\nnoise = 0.1\n").unwrap();

    // File only.
    let output = bin()
        .current_dir(dir.path())
        .args(["--config", "cfg.toml", "collect", "--site", "site.json", "--rollouts", "1", "--out", "a.jsonl"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["seed"], 100);
    assert_eq!(manifest["parameters"]["noise"], 0.1);

    // Env overrides file.
    let output = bin()
        .current_dir(dir.path())
        .env("WEBSTAR_SEED", "200")
        .args(["--config", "cfg.toml", "collect", "--site", "site.json", "--rollouts", "1", "--out", "b.jsonl"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["seed"], 200);

    // Flag overrides env.
    let output = bin()
        .current_dir(dir.path())
        .env("WEBSTAR_SEED", "200")
        .args(["--config", "cfg.toml", "collect", "--site", "site.json", "--rollouts", "1", "--seed", "300", "--out", "c.jsonl"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["seed"], 300);
}

#[test]
fn manifests_stamp_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("traj.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], "webstar-manifest/1");
    assert_eq!(manifest["command"], "collect");
    assert_eq!(manifest["inputs"][0]["path"], "site.json");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0]["path"], "traj.jsonl");
    // Execution-only knobs stay out of the echoed parameters.
    assert!(manifest["parameters"].get("parallelism").is_none());
    // But the semantic ones are all echoed.
    for key in ["tasks", "rollouts", "noise", "irreversible", "max_steps"] {
        assert!(manifest["parameters"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn inputs_are_never_mutated() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    let before = std::fs::read(dir.path().join("traj.jsonl")).unwrap();
    let (code, _, _) = run(dir.path(), &["grade", "--in", "traj.jsonl", "--backend", "oracle", "--site", "site.json", "--out", "graded.jsonl"]);
    assert_eq!(code, 0);
    let (code, _, _) = run(dir.path(), &["filter", "--in", "graded.jsonl", "--judge", "oracle", "--site", "site.json", "--out", "kept.jsonl"]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(dir.path().join("traj.jsonl")).unwrap(), before);
}

#[test]
fn augment_is_idempotent_without_force() {
    let dir = tempfile::tempdir().unwrap();
    setup_pipeline(dir.path());
    let (code, _, _) = run(dir.path(), &["augment", "--in", "traj.jsonl", "--backend", "template", "--out", "aug1.jsonl"]);
    assert_eq!(code, 0);
    let (code, out, _) = run(dir.path(), &["augment", "--in", "aug1.jsonl", "--backend", "template", "--out", "aug2.jsonl"]);
    assert_eq!(code, 0);
    assert!(out.contains("skipped"));
    assert_eq!(
        std::fs::read(dir.path().join("aug1.jsonl")).unwrap(),
        std::fs::read(dir.path().join("aug2.jsonl")).unwrap()
    );
}
