use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use slowdrift_cli::artifacts::{write_run, Manifest, PipelineOutput, MANIFEST};
use slowdrift_cli::config::BUILTIN;
use slowdrift_cli::RunArtifacts;

fn slowdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowdrift")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const PLAN: &str = r#"
schema_version = 1
scenario = "circles"

[domain]
kind = "box"
lo = [-1.5, -2.0]
hi = [2.5, 2.0]

[planner]
pair = [0, 1]
z0 = [0.5, 0.0]
z1 = [0.5, 0.3]
"#;

#[test]
fn negative_eps_on_the_command_line_is_a_config_error() {
    let out = slowdrift(&["drift", "run", "--eps", "-0.01"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn negative_eps_in_the_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "neg.toml", &format!("eps = [0.01, -0.005]\n{PLAN}"));
    let out = slowdrift(&["path", "plan", "--config", &cfg, "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", &PLAN.replace("[planner]", "[planner]\nlevel = 3"));
    let out = slowdrift(&["path", "plan", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("level"));
}

#[test]
fn wrong_schema_version_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v2.toml", &PLAN.replace("schema_version = 1", "schema_version = 2"));
    assert_eq!(code(&slowdrift(&["path", "plan", "--config", &cfg])), 2);
    assert_eq!(code(&slowdrift(&["path", "plan", "--config", path_str(&tmp.path().join("absent.toml"))])), 2);
}

#[test]
fn run_needs_a_pipeline_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "plan.toml", PLAN);
    assert_eq!(code(&slowdrift(&["run", "--config", &cfg])), 2);
    assert_eq!(code(&slowdrift(&["run"])), 2);
}

#[test]
fn path_plan_writes_a_consistent_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "plan.toml", PLAN);
    let dir = tmp.path().join("run");
    let out = slowdrift(&["path", "plan", "--config", &cfg, "--out", path_str(&dir), "--seed", "42"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("PASS"));

    let run = RunArtifacts::load(&dir).unwrap();
    run.verify_files().unwrap();
    assert_eq!(run.manifest.task, "path_plan");
    assert_eq!(run.manifest.seed, 42);
    assert_eq!(run.manifest.config_hash, hex::encode(Sha256::digest(PLAN.as_bytes())));
    assert_eq!(run.manifest.toolkit_version, env!("CARGO_PKG_VERSION"));
    for f in &run.manifest.files {
        assert_eq!(f.sha256, hex::encode(Sha256::digest(fs::read(dir.join(&f.path)).unwrap())));
    }
    let roles: Vec<&str> = run.manifest.files.iter().map(|f| f.role.as_str()).collect();
    assert_eq!(roles, ["path", "checks"]);
    assert!(run.all_pass());
}

#[test]
fn blocked_planner_is_a_check_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{PLAN}\n{}",
        r#"
[[generators]]
label = "J_a"
constant = 0.0
linear = [0.0, 0.0]
hessian = [[2.0, 0.0], [0.0, 2.0]]

[[generators]]
label = "J_b"
constant = 0.0
linear = [0.0, 0.0]
hessian = [[4.0, 0.0], [0.0, 4.0]]
"#
    )
    .replace("z1 = [0.5, 0.3]", "z1 = [0.8, 0.3]");
    let cfg = write_config(tmp.path(), "blocked.toml", &text);
    let dir = tmp.path().join("run");
    let out = slowdrift(&["path", "plan", "--config", &cfg, "--out", path_str(&dir)]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("FAIL"));
    assert!(dir.join("not_accessible.txt").is_file());

    // the summary of a stored run reports the same verdict
    assert_eq!(code(&slowdrift(&["summary", path_str(&dir)])), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = (0..2)
        .map(|k| {
            let dir = tmp.path().join(format!("r{k}"));
            let out = slowdrift(&["drift", "run", "--out", path_str(&dir)]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            dir
        })
        .collect();
    let a = RunArtifacts::load(&runs[0]).unwrap();
    let b = RunArtifacts::load(&runs[1]).unwrap();
    assert_eq!(a.manifest.files, b.manifest.files);
    for f in a.manifest.files.iter().filter(|f| f.path.ends_with(".csv")) {
        assert_eq!(fs::read(runs[0].join(&f.path)).unwrap(), fs::read(runs[1].join(&f.path)).unwrap(), "{}", f.path);
    }
}

#[test]
fn floats_are_written_with_seventeen_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(code(&slowdrift(&["orbit", "find", "--out", path_str(&dir)])), 0);
    let text = fs::read_to_string(dir.join("floquet.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let lambda = row.split(',').next().unwrap();
    let mantissa = lambda.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{lambda}");
}

#[test]
fn empty_run_summary_is_an_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = Manifest {
        toolkit_version: "test".into(),
        task: "none".into(),
        scenario: "empty".into(),
        config_source: "inline".into(),
        config_hash: String::new(),
        seed: 0,
        eps: Vec::new(),
        started_unix: 0,
        finished_unix: 0,
        files: Vec::new(),
    };
    write_run(tmp.path(), &PipelineOutput::default(), manifest).unwrap();
    let out = slowdrift(&["summary", path_str(tmp.path())]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_artifacts_are_runtime_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&slowdrift(&["summary", path_str(tmp.path())])), 3);

    let dir = tmp.path().join("run");
    assert_eq!(code(&slowdrift(&["orbit", "find", "--out", path_str(&dir)])), 0);
    fs::remove_file(dir.join("floquet.csv")).unwrap();
    let out = slowdrift(&["summary", path_str(&dir)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("floquet.csv"));
    assert!(dir.join(MANIFEST).is_file());
}

#[test]
fn shipped_scenarios_parse() {
    for (name, _) in BUILTIN {
        slowdrift_cli::config::builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
