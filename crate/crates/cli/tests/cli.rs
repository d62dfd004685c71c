use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torque-interp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SHORT: &str = "duration = 1.2\n[gains]\nkp = 500.0\n";

#[test]
fn run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", SHORT);
    let out = dir.path().join("out");
    let o = cli(&[
        "run",
        &cfg,
        "--seed",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = out.join("kp500_interpolated_r0_s3.csv");
    let mut r = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(r.records().count(), 2400);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", SHORT);
    let out = dir.path().to_str().unwrap();
    let o = cli(&[
        "run",
        &cfg,
        "--mode",
        "direct",
        "--kp",
        "800",
        "--set",
        "duration=1.1",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("direct at Kp 800"));
    assert!(stdout.contains("completed 1.1 s"));
    assert!(dir.path().join("kp800_direct_r0_s0.csv").exists());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", SHORT);
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        assert!(cli(&["run", &cfg, "--out-dir", out.to_str().unwrap()])
            .status
            .success());
        fs::read(out.join("kp500_interpolated_r0_s0.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", SHORT);
    let bad = write(dir.path(), "bad.toml", "controller_hz = 300\n");
    for args in [
        vec!["run", bad.as_str()],
        vec!["run", cfg.as_str(), "--set", "gains.kp=-1"],
        vec!["run", cfg.as_str(), "--set", "no_such_field=1"],
        vec!["run", "/nonexistent/cfg.toml"],
        vec!["compare", cfg.as_str(), "--kp", "0"],
        vec!["model-info", "/nonexistent/model.toml"],
    ] {
        assert_eq!(cli(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn sweep_writes_summary_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.toml",
        "kp = [200.0, 800.0]\nrepetitions = 2\n[base]\nduration = 1.2\n",
    );
    let out = dir.path().join("out");
    let o = cli(&["sweep", &spec, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "kp",
            "mode",
            "seed_count",
            "pos_err_med",
            "pos_err_p5",
            "pos_err_p95",
            "vel_err_med",
            "vel_err_p5",
            "vel_err_p95",
            "vel_err_p9",
            "blowup_frac"
        ]
    );
    assert_eq!(r.records().count(), 4);
    let traces = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("kp")
        })
        .count();
    assert_eq!(traces, 8);
    assert!(out.join("report.txt").exists());
}

#[test]
fn compare_reports_a_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", SHORT);
    let out = dir.path().to_str().unwrap();
    let o = cli(&["compare", &cfg, "--kp", "500", "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("spread ratio interpolated/direct"));
    assert!(dir.path().join("compare_kp500.csv").exists());
}

#[test]
fn codec_check_and_model_info() {
    let o = cli(&["codec-check", "--packets", "200"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("216/216"));
    let o = cli(&["model-info"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("6 joints"));
}
