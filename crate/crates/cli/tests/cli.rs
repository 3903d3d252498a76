use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn loadtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadtrack"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A two-hour day keeps simulations quick.
const SHORT_DAY: &str = "day_length_s=7200";

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let profile = data("clear_day.csv");
    let out = loadtrack(&[
        "simulate",
        "--set",
        SHORT_DAY,
        "--profile",
        profile.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("simulated hour 2"));
    assert!(stdout(&out).contains("utilization"));
    let csv = std::fs::read_to_string(out_dir.join("day.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7202);
    assert!(out_dir.join("summary.toml").exists());
}

#[test]
fn quiet_suppresses_progress() {
    let dir = tempfile::tempdir().unwrap();
    let profile = data("clear_day.csv");
    let out = loadtrack(&[
        "simulate",
        "-q",
        "--set",
        SHORT_DAY,
        "--profile",
        profile.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).is_empty(), "{}", stderr(&out));
}

#[test]
fn config_file_drives_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadtrack(&[
        "simulate",
        "-q",
        "--config",
        data("table1.toml").to_str().unwrap(),
        "--set",
        SHORT_DAY,
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn misaligned_minimum_is_a_config_error() {
    let out = loadtrack(&[
        "simulate",
        "--set",
        "loads.1.min_on_s=150",
        "--profile",
        "unused.csv",
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("loads.1.min_on_s"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn config_error_paths_exit_2() {
    let cases: &[&[&str]] = &[
        &["simulate", "--config", "/nonexistent/run.toml"],
        &["simulate", "--set", "no_such_key=1"],
        &["simulate", "--set", "loads.7.size=1"],
        &[
            "simulate",
            "--set",
            "loads.2.on_poles=[0.05]",
            "--profile",
            "x.csv",
        ],
        &["simulate"],
        &["simulate", "--threads", "0", "--profile", "x.csv"],
        &["frobnicate"],
        &["count", "--initial", "10"],
        &["count", "--loads", "5"],
        &["inspect", "--set", "horizon_s=90"],
    ];
    for args in cases {
        let out = loadtrack(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
}

#[test]
fn data_error_paths_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let unordered = write("unordered.csv", "t,p\n0,1\n60,2\n30,3\n");
    let zeros = write("zeros.csv", "t,p\n0,0\n60,0\n");
    let garbage = write("garbage.csv", "t,p\nx,y\n");
    let good = data("clear_day.csv");
    let blocker = write("blocker", "not a directory");
    let unwritable = blocker.join("out");
    let cases: Vec<Vec<String>> = vec![
        vec![
            "--profile".into(),
            dir.path().join("missing.csv").display().to_string(),
        ],
        vec!["--profile".into(), unordered.display().to_string()],
        vec!["--profile".into(), zeros.display().to_string()],
        vec!["--profile".into(), garbage.display().to_string()],
        vec![
            "--profile".into(),
            good.display().to_string(),
            "--output".into(),
            unwritable.display().to_string(),
        ],
    ];
    for extra in cases {
        let mut args = vec!["simulate", "-q", "--set", SHORT_DAY];
        args.extend(extra.iter().map(String::as_str));
        let out = loadtrack(&args);
        assert_eq!(code(&out), 3, "{extra:?}: {}", stderr(&out));
        assert!(stderr(&out).contains("data error"));
    }
}

#[test]
fn dropped_rows_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gappy.csv");
    std::fs::write(&p, "t,p\n0,0\n3600,-1\n7200,1\n").unwrap();
    let out = loadtrack(&[
        "simulate",
        "--set",
        SHORT_DAY,
        "--profile",
        p.to_str().unwrap(),
        "--output",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("dropped 1 rows"));
    assert!(stderr(&out).contains("line 3"));
}

#[test]
fn count_reports_trivial_and_reference_instances() {
    let out = loadtrack(&[
        "count",
        "--loads",
        "1",
        "--min-on-epochs",
        "1",
        "--min-off-epochs",
        "1",
        "--horizon-epochs",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    assert!(
        stdout(&out).contains("schedules=8 tree_nodes=14"),
        "{}",
        stdout(&out)
    );

    let out = loadtrack(&[
        "count",
        "--horizon-epochs",
        "6",
        "--min-on-epochs",
        "4",
        "--min-off-epochs",
        "4",
        "--all-flags",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.contains("schedules=")).count(), 8);
    assert!(text.contains("reference: published count 2197"));
}

#[test]
fn count_honors_day_end_and_initial_state() {
    let out = loadtrack(&[
        "count",
        "--loads",
        "1",
        "--min-on-epochs",
        "3",
        "--min-off-epochs",
        "3",
        "--horizon-epochs",
        "6",
        "--epochs-to-day-end",
        "4",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("schedules=8 "), "{}", stdout(&out));

    let out = loadtrack(&[
        "count",
        "--loads",
        "1",
        "--min-on-epochs",
        "3",
        "--min-off-epochs",
        "3",
        "--horizon-epochs",
        "4",
        "--initial",
        "1",
        "--initial-dwell",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("schedules=3 "), "{}", stdout(&out));
}

#[test]
fn inspect_prints_models() {
    let out = loadtrack(&["inspect"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("a=0.9900498337"), "{text}");
    assert_eq!(text.matches("dc_gain=1.000000000").count(), 6);
    let load2 = text.split("load 2:").nth(1).unwrap();
    let pct: f64 = load2
        .split("overshoot_pct=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(pct > 0.0);
}

#[test]
fn help_exits_zero() {
    let out = loadtrack(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("simulate"));
}
