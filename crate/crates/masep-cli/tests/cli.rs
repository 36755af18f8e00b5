//! Drives the installed binary end to end through its documented surface.

use std::path::PathBuf;
use std::process::{Command, Output};

fn masep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("masep-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn identity_probability_as_json() {
    let out = masep(&[
        "prob", "--p", "0.5", "--t", "0", "--y", "0,1", "--nu", "12", "--x", "0,1", "--pi",
        "12", "--json",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let record: serde_json::Value = serde_json::from_str(stdout_str(&out).trim()).unwrap();
    for key in ["p", "t", "y", "nu", "x", "pi", "value", "err", "M", "radius"] {
        assert!(record.get(key).is_some(), "missing key {key}");
    }
    let value = record["value"].as_f64().unwrap();
    assert!((value - 1.0).abs() < 1e-8, "identity value {value}");
}

#[test]
fn text_output_lists_the_contour() {
    let out = masep(&[
        "prob", "--p", "0.7", "--t", "0.5", "--y", "0,1", "--nu", "12", "--x", "0,1", "--pi",
        "21",
    ]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    for field in ["value", "err", "M", "radius"] {
        assert!(text.lines().any(|l| l.starts_with(field)), "missing {field}: {text}");
    }
}

#[test]
fn inadmissible_radius_is_rejected_with_the_bound() {
    let out = masep(&[
        "prob", "--p", "0.7", "--t", "0.5", "--y", "0,1", "--nu", "12", "--x", "0,1", "--pi",
        "21", "--radius", "0.62",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_str(&out);
    assert!(err.contains("0.594110"), "bound missing from: {err}");
}

#[test]
fn exhausted_refinement_reports_non_convergence() {
    let out = masep(&[
        "prob", "--p", "0.7", "--t", "0.5", "--y", "0", "--nu", "1", "--x", "1", "--pi", "1",
        "--tol", "1e-300",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_str(&out));
}

#[test]
fn missing_flags_are_a_usage_error() {
    let out = masep(&["prob"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_reports_are_byte_identical_per_seed() {
    let args = [
        "verify", "--suite", "all", "--seed", "42", "--points", "12", "--alphabet", "3",
    ];
    let first = masep(&args);
    let second = masep(&args);
    assert!(first.status.success(), "stderr: {}", stderr_str(&first));
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());
}

#[test]
fn oracle_compare_defaults_stay_within_tolerance() {
    let out = masep(&["oracle-compare"]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("state,exact,oracle,diff"));
    let mut rows = 0usize;
    for line in lines {
        // The state field is quoted and holds commas; numbers follow it.
        let closing = line.rfind('"').expect("quoted state field");
        let numbers: Vec<f64> = line[closing + 2..]
            .split(',')
            .map(|v| v.parse().expect("numeric field"))
            .collect();
        assert_eq!(numbers.len(), 3, "row: {line}");
        assert!(numbers[2].abs() < 1e-6, "diff too large in row: {line}");
        rows += 1;
    }
    assert!(rows > 100, "only {rows} rows");
    assert!(stderr_str(&out).contains("max |diff|"));
}

#[test]
fn sweep_outputs_are_deterministic_and_conserve_mass() {
    let csv_a = temp_path("a.csv");
    let svg_a = temp_path("a.svg");
    let csv_b = temp_path("b.csv");
    let svg_b = temp_path("b.svg");
    let run = |csv: &PathBuf, svg: &PathBuf| {
        let out = masep(&[
            "sweep", "--p", "0.7", "--t-list", "0,0.5", "--y", "0,1", "--nu", "21", "--out",
            csv.to_str().unwrap(), "--plot", svg.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    };
    run(&csv_a, &svg_a);
    run(&csv_b, &svg_b);

    let data = std::fs::read_to_string(&csv_a).unwrap();
    assert_eq!(data, std::fs::read_to_string(&csv_b).unwrap());
    let plot = std::fs::read_to_string(&svg_a).unwrap();
    assert_eq!(plot, std::fs::read_to_string(&svg_b).unwrap());
    assert!(plot.starts_with("<svg "));
    assert!(plot.contains("<polyline"));

    let mut lines = data.lines();
    assert_eq!(lines.next(), Some("t,x_1,x_2,pi,prob"));
    let mut mass_by_t = std::collections::BTreeMap::<String, f64>::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5, "row: {line}");
        let prob: f64 = fields[4].parse().unwrap();
        *mass_by_t.entry(fields[0].to_string()).or_default() += prob;
    }
    assert_eq!(mass_by_t.len(), 2);
    for (t, mass) in mass_by_t {
        assert!((mass - 1.0).abs() < 1e-6, "mass at t={t} is {mass}");
    }

    for p in [csv_a, svg_a, csv_b, svg_b] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn zero_time_sweep_is_a_single_unit_row() {
    let csv = temp_path("zero.csv");
    let out = masep(&[
        "sweep", "--p", "0.6", "--t-list", "0", "--y", "0,2", "--nu", "12", "--window", "3",
        "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let data = std::fs::read_to_string(&csv).unwrap();
    let mut unit_rows = 0usize;
    for line in data.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let prob: f64 = fields[4].parse().unwrap();
        if prob > 0.999 {
            unit_rows += 1;
            assert_eq!(&fields[1..4], &["0", "2", "12"], "unit mass on {line}");
        } else {
            assert!(prob.abs() < 1e-8, "stray mass on {line}");
        }
    }
    assert_eq!(unit_rows, 1);
    let _ = std::fs::remove_file(csv);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let run = |threads: &str| {
        let out = masep(&[
            "prob", "--p", "0.7", "--t", "0.5", "--y", "0,2", "--nu", "12", "--x", "1,2",
            "--pi", "21", "--json", "--threads", threads,
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_str(&out));
        out.stdout
    };
    assert_eq!(run("1"), run("4"));
}
