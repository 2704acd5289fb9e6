//! End-to-end checks of the `qla` binary: exit codes, artifacts, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qla() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qla"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

const PASSING: &str = r#"
schedule = [100.0, 200.0]
reps = 500
seed = 1

[model]
kind = "vol-contrast"
theta_star = 0.0

[[probes]]
name = "identifiability"
"#;

const FAILING: &str = r#"
schedule = [100.0, 200.0]
reps = 500
seed = 1

[model]
kind = "vol-contrast"
theta_star = 0.0

[[probes]]
name = "identifiability"

[[probes]]
name = "gamma_uniform_consistency"
"#;

fn run_ok(cmd: &mut Command) -> Output {
    cmd.output().expect("binary should spawn")
}

/// Recursively collects (relative path, bytes) of every file under a dir.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn passing_run_exits_zero_and_report_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PASSING);
    let out_dir = tmp.path().join("out");
    let out = run_ok(
        qla()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("resolved_config.json").exists());
    assert!(out_dir.join("00_identifiability.report.json").exists());

    let rep = run_ok(qla().arg("report").arg(&out_dir));
    assert_eq!(rep.status.code(), Some(0));
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("identifiability"));
    assert!(text.contains("PASS"));
}

#[test]
fn failing_probe_propagates_exit_one_through_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), FAILING);
    let out_dir = tmp.path().join("out");
    let out = run_ok(
        qla()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    assert_eq!(out.status.code(), Some(1));

    let rep = run_ok(qla().arg("report").arg(&out_dir));
    assert_eq!(rep.status.code(), Some(1));
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn empty_probe_list_is_a_vacuous_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
schedule = [100.0, 200.0]
reps = 500
seed = 1

[model]
kind = "vol-contrast"
theta_star = 0.0
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run_ok(
        qla()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["probes"].as_array().unwrap().len(), 0);
    assert_eq!(summary["exit_code"], 0);
}

#[test]
fn report_on_missing_directory_names_the_path() {
    let out = run_ok(qla().args(["report", "/no/such/qla/run/dir"]));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/qla/run/dir"), "{err}");
}

#[test]
fn report_on_incomplete_run_echoes_marker_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("broken");
    fs::create_dir_all(&run_dir).unwrap();
    fs::write(
        run_dir.join("INCOMPLETE.marker"),
        "run aborted: disk full\n",
    )
    .unwrap();
    let out = run_ok(qla().arg("report").arg(&run_dir));
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("disk full"), "{text}");
}

#[test]
fn identical_config_and_seed_give_byte_identical_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PASSING);
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for out in [&out1, &out2] {
        let o = run_ok(
            qla()
                .args(["run", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(out),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(snapshot(&out1), snapshot(&out2));
}

#[test]
fn estimate_prints_full_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PASSING);
    let out = run_ok(qla().args(["estimate", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in [
        "theta_m",
        "theta_b",
        "u_m",
        "u_b",
        "delta",
        "gamma_star",
        "at_boundary",
    ] {
        assert!(record.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn estimate_dump_paths_writes_increment_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PASSING);
    let out_dir = tmp.path().join("dump");
    let out = run_ok(
        qla()
            .args(["estimate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .arg("--dump-paths"),
    );
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(out_dir.join("paths/vol_n100.csv")).unwrap();
    assert!(table.starts_with("i,dx\n"));
    assert_eq!(table.lines().count(), 101);
}

#[test]
fn single_probe_subcommand_exits_by_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PASSING);
    let out_dir = tmp.path().join("probe-out");
    let out = run_ok(
        qla()
            .args(["probe", "identifiability", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("00_identifiability.report.json").exists());

    let out = run_ok(qla().args(["probe", "bogus", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn bad_configs_are_rejected_with_key_names() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{PASSING}\nmystery_key = 1\n"));
    let out = run_ok(qla().args(["run", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_key"));
}
