//! Command-line behaviour and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pacshift::harness::{calibrate_method, Method};
use pacshift::io::{parse_calibration_report, parse_reports, parse_summary, read_scores};
use pacshift::predsets::AcceptanceRandomness;
use pacshift::{RiskParams, SolveMode, ThresholdResult};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn pacshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacshift")).args(args).output().expect("run pacshift")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const K2_TAU: f64 = 0.44425075688077453;

fn calibrate_k2(extra: &[&str]) -> Output {
    let (src, tgt, test) = (data("k2/source.csv"), data("k2/target.csv"), data("k2/test.csv"));
    let mut args = vec![
        "calibrate",
        "--source",
        path_str(&src),
        "--target",
        path_str(&tgt),
        "--test",
        path_str(&test),
        "--epsilon",
        "0.2",
        "--delta",
        "0.05",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    pacshift(&args)
}

#[test]
fn calibrate_fixture_is_deterministic() {
    let a = calibrate_k2(&[]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = calibrate_k2(&[]);
    assert_eq!(a.stdout, b.stdout);

    let report = parse_calibration_report(&String::from_utf8(a.stdout).unwrap()).unwrap();
    assert_eq!(report.method, Method::PsW);
    assert_eq!(report.tau, Some(K2_TAU));
    assert!(report.weight_box.is_some() && report.test_metrics.is_some());

    // Same answer through the library.
    let src = read_scores(&data("k2/source.csv")).unwrap();
    let tgt = read_scores(&data("k2/target.csv")).unwrap();
    let v = AcceptanceRandomness::draw(src.len(), 3);
    let rp = RiskParams::new(0.2, 0.05).unwrap();
    let (lib, _) = calibrate_method(Method::PsW, &src, &tgt, &v, rp, SolveMode::Relaxed, None).unwrap();
    assert_eq!(lib, ThresholdResult::Calibrated { tau: K2_TAU });
}

#[test]
fn calibrate_writes_report_file_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["PS", "PS-W", "PS-C", "PS-R", "WCP"] {
        let out = dir.path().join(format!("{method}.json"));
        let res = calibrate_k2(&["--method", method, "--out", path_str(&out)]);
        assert_eq!(code(&res), 0, "{method}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(res.stdout.is_empty());
        let report = parse_calibration_report(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report.method.name(), method);
        assert_eq!(report.point_weights.is_some(), matches!(method, "PS-R" | "WCP"));
    }
}

#[test]
fn unlabeled_source_is_a_data_error() {
    let tgt = data("k2/target.csv");
    let out = pacshift(&["calibrate", "--source", path_str(&tgt), "--target", path_str(&tgt)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));
}

#[test]
fn label_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let k3 = dir.path().join("k3.csv");
    fs::write(&k3, "s0,s1,s2\n0.2,0.3,0.5\n0.6,0.2,0.2\n").unwrap();
    let src = data("k2/source.csv");
    let out = pacshift(&["calibrate", "--source", path_str(&src), "--target", path_str(&k3)]);
    assert_eq!(code(&out), 3);
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(code(&calibrate_k2(&["--epsilon", "1.5"])), 2);
    assert_eq!(code(&calibrate_k2(&["--delta", "0"])), 2);
    assert_eq!(code(&calibrate_k2(&["--method", "ORACLE"])), 2);
    assert_eq!(code(&calibrate_k2(&["--method", "nope"])), 2);
    assert_eq!(code(&pacshift(&["calibrate"])), 2);
}

#[test]
fn missing_file_is_a_data_error() {
    let out = pacshift(&["calibrate", "--source", "/nonexistent/a.csv", "--target", "/nonexistent/b.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn weight_box_abort_exits_4_and_still_reports() {
    // Label 1 is never predicted, so its diagonal interval starts at zero.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("source.csv");
    let tgt = dir.path().join("target.csv");
    let mut s = String::from("label,s0,s1\n");
    for i in 0..200 {
        s.push_str(&format!("{},0.9,0.1\n", i % 2));
    }
    fs::write(&src, s).unwrap();
    fs::write(&tgt, "s0,s1\n0.9,0.1\n0.2,0.8\n").unwrap();
    let out = pacshift(&["calibrate", "--source", path_str(&src), "--target", path_str(&tgt)]);
    assert_eq!(code(&out), 4);
    let report = parse_calibration_report(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(report.result.is_aborted());
    assert_eq!(report.tau, None);
}

fn run_experiment(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["experiment", "--scenario", path_str(scenario), "--out", path_str(out)];
    args.extend_from_slice(extra);
    pacshift(&args)
}

#[test]
fn experiment_single_trial_and_repeat_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let extra = ["--epsilon", "0.1", "--delta", "0.01", "--trials", "1", "--seed", "4", "--method", "PS", "--method", "PS-W"];
    for out in [&a, &b] {
        let res = run_experiment(&data("k2_small.toml"), out, &extra);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        assert!(String::from_utf8_lossy(&res.stdout).contains("PS-W"));
    }
    let ra = fs::read(a.join("reports.jsonl")).unwrap();
    assert_eq!(ra, fs::read(b.join("reports.jsonl")).unwrap());
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());

    let reports = parse_reports(ra.as_slice()).unwrap();
    assert_eq!(reports.iter().map(|r| r.method).collect::<Vec<_>>(), [Method::Ps, Method::PsW]);
    let summary = parse_summary(fs::File::open(a.join("summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| s.trials == 1));
}

#[test]
fn experiment_needs_run_parameters() {
    let dir = tempfile::tempdir().unwrap();
    // The fixture scenario sets no epsilon/delta/trials/seed/methods.
    let res = run_experiment(&data("k2_small.toml"), dir.path(), &[]);
    assert_eq!(code(&res), 2);
}

#[test]
fn shipped_scenarios_parse_and_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let dir = tempfile::tempdir().unwrap();
    for name in ["large_shift.toml", "large_shift_small_n.toml", "cdc_style.toml"] {
        let res = run_experiment(&root.join(name), &dir.path().join(name), &["--trials", "1"]);
        assert_eq!(code(&res), 0, "{name}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn simulate_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let res = pacshift(&["simulate", "--scenario", path_str(&data("k2_small.toml")), "--seed", "7", "--out", path_str(dir.path())]);
    assert_eq!(code(&res), 0);
    for f in ["source.csv", "target.csv", "test.csv"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(data("k2").join(f)).unwrap(), "{f}");
    }
}
