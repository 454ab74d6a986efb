use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn spadcorr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spadcorr")).current_dir(dir).args(args).output().expect("spawn spadcorr")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "status {:?}\n{}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn small_config(dir: &Path, extra: &str) {
    fs::write(dir.join("run.cfg"), format!("# small closed loop\nframes = 300000\n{extra}")).unwrap();
}

#[test]
fn pipeline_is_deterministic_and_violates_on_both_axes() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "");
    for out_dir in ["a", "b"] {
        ok(&spadcorr(dir.path(), &["--config", "run.cfg", "--seed", "1", "pipeline", "--out-dir", out_dir]));
    }
    for name in ["report.json", "far.acc", "near.g2c", "crosstalk.csv", "dt_hist.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/report.json")).unwrap()).unwrap();
    for axis in report["axes"].as_array().unwrap() {
        for method in ["gauss2d", "peaks"] {
            assert_eq!(axis["methods"][method]["violated"], true, "{axis}");
        }
    }
}

#[test]
fn different_seeds_give_different_data() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), "frames = 20000\n").unwrap();
    ok(&spadcorr(dir.path(), &["--config", "run.cfg", "--seed", "1", "simulate", "--mode", "far", "--out", "a.evt"]));
    ok(&spadcorr(dir.path(), &["--config", "run.cfg", "--seed", "2", "simulate", "--mode", "far", "--out", "b.evt"]));
    assert_ne!(fs::read(dir.path().join("a.evt")).unwrap(), fs::read(dir.path().join("b.evt")).unwrap());
}

#[test]
fn staged_commands_match_the_pipeline() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "");
    let d = dir.path();
    let cfg = ["--config", "run.cfg", "--seed", "3"];
    let run = |rest: &[&str]| ok(&spadcorr(d, &[&cfg[..], rest].concat()));
    run(&["simulate", "--mode", "near", "--out", "near.evt"]);
    run(&["simulate", "--mode", "far", "--out", "far.evt"]);
    run(&["correlate", "--input", "near.evt", "--out", "near.acc"]);
    run(&["correlate", "--input", "far.evt", "--out", "far.acc"]);
    run(&["correct", "--near", "near.acc", "--far", "far.acc", "--out-dir", "corr"]);
    run(&["epr", "--near", "corr/near.g2c", "--far", "corr/far.g2c", "--out", "report.json"]);
    run(&["pipeline", "--out-dir", "pipe"]);
    for (staged, piped) in [
        ("far.acc", "pipe/far.acc"),
        ("near.acc", "pipe/near.acc"),
        ("corr/far.g2c", "pipe/far.g2c"),
        ("report.json", "pipe/report.json"),
    ] {
        assert_eq!(fs::read(d.join(staged)).unwrap(), fs::read(d.join(piped)).unwrap(), "{staged}");
    }
}

#[test]
fn dt_hist_export_is_symmetric_with_a_central_peak() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), "frames = 100000\n").unwrap();
    ok(&spadcorr(dir.path(), &["--config", "run.cfg", "simulate", "--mode", "far", "--out", "far.evt"]));
    let out = spadcorr(dir.path(), &["export", "--what", "dt-hist", "--input", "far.evt"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dt,counts_per_mframe"));
    let rows: Vec<(i64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 509);
    for i in 0..rows.len() {
        assert_eq!(rows[i].0, -rows[rows.len() - 1 - i].0);
        assert_eq!(rows[i].1, rows[rows.len() - 1 - i].1);
    }
    let peak = rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(peak.0, 0);
}

#[test]
fn matrix_export_has_one_row_per_linear_index() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), "frames = 2000\n").unwrap();
    ok(&spadcorr(dir.path(), &["--config", "run.cfg", "simulate", "--mode", "far", "--out", "far.evt"]));
    ok(&spadcorr(dir.path(), &["--config", "run.cfg", "correlate", "--input", "far.evt", "--out", "far.acc"]));
    ok(&spadcorr(dir.path(), &["export", "--what", "matrix", "--input", "far.acc", "--out", "m.csv"]));
    let text = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(text.lines().count(), 1024);
    assert!(text.lines().all(|l| l.split(',').count() == 1024));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.cfg"), "frames = 10\nno_such_key = 1\n").unwrap();
    let out = spadcorr(dir.path(), &["--config", "bad.cfg", "pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    fs::write(dir.path().join("bad.cfg"), "correlate.window = 12\n").unwrap();
    assert_eq!(spadcorr(dir.path(), &["--config", "bad.cfg", "pipeline"]).status.code(), Some(2));
    assert_eq!(spadcorr(dir.path(), &["--config", "missing.cfg", "pipeline"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("junk.evt"), b"not an event file at all").unwrap();
    let out = spadcorr(dir.path(), &["correlate", "--input", "junk.evt", "--out", "x.acc"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
    assert_eq!(spadcorr(dir.path(), &["correlate", "--input", "absent.evt", "--out", "x.acc"]).status.code(), Some(3));
}

#[test]
fn failed_fits_exit_4_and_still_write_the_report() {
    let dir = TempDir::new().unwrap();
    // Too few unmasked cells for a 2D fit on a 4x4 sensor.
    fs::write(
        dir.path().join("tiny.cfg"),
        "frames = 200000\nsensor.n_x = 4\nsensor.n_y = 4\ncorrect.crosstalk = none\nepr.methods = gauss2d\n",
    )
    .unwrap();
    let out = spadcorr(dir.path(), &["--config", "tiny.cfg", "pipeline", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gauss2d"));
    assert!(dir.path().join("o/report.json").exists());
}
