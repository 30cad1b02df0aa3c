//! Golden matrix of CLI invocations: every documented exit code on every
//! error path, plus the no-raw-values output contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dp-release")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary spawns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn plan_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("plans/qrs_release.toml")
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn workspace_with_data(n: usize) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let out = run(
        &[
            "synth",
            "--n",
            &n.to_string(),
            "--seed",
            "1",
            "--out",
            "data.csv",
        ],
        &root,
    );
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    Workspace { _dir: dir, root }
}

#[test]
fn feasibility_exit_codes_and_output() {
    let ws = workspace_with_data(1);
    let base = [
        "feasibility",
        "--budget",
        "10000",
        "--expected-cost",
        "34",
        "--population",
        "10646",
    ];

    let out = run(&base, &ws.root);
    assert_eq!(code(&out), 0);
    assert!(
        stdout(&out).contains("epsilon_max = 0.0272523"),
        "{}",
        stdout(&out)
    );

    let mut with_eps = base.to_vec();
    with_eps.extend(["--epsilon", "0.2"]);
    let out = run(&with_eps, &ws.root);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("INFEASIBLE"));

    let mut with_eps = base.to_vec();
    with_eps.extend(["--epsilon", "0.02"]);
    let out = run(&with_eps, &ws.root);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("FEASIBLE"));

    // Malformed number -> validation exit.
    let out = run(
        &[
            "feasibility",
            "--budget",
            "abc",
            "--expected-cost",
            "34",
            "--population",
            "10",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 1);

    // Structurally valid numbers, invalid model.
    let out = run(
        &[
            "feasibility",
            "--budget",
            "0",
            "--expected-cost",
            "34",
            "--population",
            "10",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn ingest_counts_only_and_io_errors() {
    let ws = workspace_with_data(50);
    let out = run(&["ingest", "--data", "data.csv"], &ws.root);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("rows accepted: 50"));

    let out = run(&["ingest", "--data", "no-such-file.csv"], &ws.root);
    assert_eq!(code(&out), 3);

    // Unknown rhythm code: lenient ingest drops the row; the diagnostic
    // names the line but never echoes the record value.
    let data = std::fs::read_to_string(ws.root.join("data.csv")).unwrap();
    let mut lines: Vec<&str> = data.lines().collect();
    let replaced = lines[1].replacen(lines[1].split(',').next().unwrap(), "SECRETCODE", 1);
    lines[1] = &replaced;
    std::fs::write(ws.root.join("dirty.csv"), lines.join("\n")).unwrap();

    let out = run(&["ingest", "--data", "dirty.csv"], &ws.root);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("rows dropped:  1"));
    assert!(
        !stdout(&out).contains("SECRETCODE") && !stderr(&out).contains("SECRETCODE"),
        "diagnostics leaked a record value:\n{}\n{}",
        stdout(&out),
        stderr(&out)
    );

    // Strict mode turns the dropped row into a hard validation failure.
    let out = run(&["ingest", "--data", "dirty.csv", "--strict"], &ws.root);
    assert_eq!(code(&out), 1);
    assert!(!stderr(&out).contains("SECRETCODE"));

    // Missing column.
    std::fs::write(ws.root.join("short.csv"), "Rhythm,Beat\nSB,NONE\n").unwrap();
    let out = run(&["ingest", "--data", "short.csv"], &ws.root);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("patient_age"));
}

#[test]
fn release_lifecycle_exit_codes() {
    let ws = workspace_with_data(2000);
    let plan = plan_path();
    let plan = plan.to_str().unwrap();

    let out = run(
        &[
            "release",
            "--plan",
            plan,
            "--data",
            "data.csv",
            "--ledger",
            "spend.ledger",
            "--out",
            "report.json",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("36 results"));
    assert!(stdout(&out).contains("total epsilon 0.6"));
    assert!(ws.root.join("report.json").exists());
    assert!(ws.root.join("report_hist-rhythm.plot.txt").exists());

    // Same ledger again: budget exhausted, nothing new written.
    let out = run(
        &[
            "release",
            "--plan",
            plan,
            "--data",
            "data.csv",
            "--ledger",
            "spend.ledger",
            "--out",
            "second.json",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("refused"));
    assert!(!ws.root.join("second.json").exists());

    // Missing data file.
    let out = run(
        &[
            "release", "--plan", plan, "--data", "gone.csv", "--ledger", "l2", "--out", "r.json",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 3);

    // Unparseable plan.
    std::fs::write(ws.root.join("broken.toml"), "dp_type = ???").unwrap();
    let out = run(
        &[
            "release",
            "--plan",
            "broken.toml",
            "--data",
            "data.csv",
            "--ledger",
            "l3",
            "--out",
            "r.json",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 1);

    // Unwritable report directory is caught before any budget is spent:
    // exit 3 and no ledger file appears.
    let out = run(
        &[
            "release",
            "--plan",
            plan,
            "--data",
            "data.csv",
            "--ledger",
            "l4",
            "--out",
            "missing-dir/r.json",
        ],
        &ws.root,
    );
    assert_eq!(code(&out), 3);
    assert!(
        !ws.root.join("l4").exists(),
        "preflight failure must not create or spend a ledger"
    );
}

#[test]
fn test_dp_exit_codes_and_verdict_files() {
    let ws = workspace_with_data(1);
    let fast = ["--trials", "4000", "--max-size", "1", "--seed", "1"];

    let mut args = vec![
        "test-dp",
        "--mechanism",
        "dp_count",
        "--epsilon",
        "1.0",
        "--out",
        "pass.json",
    ];
    args.extend(fast);
    let out = run(&args, &ws.root);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("PASS"));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("pass.json")).unwrap()).unwrap();
    assert_eq!(verdict["outcome"], "pass");

    let mut args = vec![
        "test-dp",
        "--mechanism",
        "broken_half_noise",
        "--epsilon",
        "1.0",
        "--out",
        "fail.json",
    ];
    args.extend(fast);
    let out = run(&args, &ws.root);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("VIOLATION"));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("fail.json")).unwrap()).unwrap();
    assert_eq!(verdict["outcome"], "violation");

    let out = run(
        &["test-dp", "--mechanism", "nonsense", "--epsilon", "1.0"],
        &ws.root,
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("dp_count"),
        "must list the catalog: {}",
        stderr(&out)
    );
}

#[test]
fn synth_validates_and_writes() {
    let ws = workspace_with_data(1);
    let out = run(
        &["synth", "--n", "0", "--seed", "1", "--out", "x.csv"],
        &ws.root,
    );
    assert_eq!(code(&out), 1);

    let out = run(
        &["synth", "--n", "10", "--seed", "1", "--out", "no-dir/x.csv"],
        &ws.root,
    );
    assert_eq!(code(&out), 3);
}
