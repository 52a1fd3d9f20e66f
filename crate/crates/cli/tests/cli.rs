//! End-to-end tests of the command-line surface: CSV ingestion, report
//! invariants, exit codes, round-trips, and determinism.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isocrit"))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn parse_stdout(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).unwrap()
}

/// Strip the wall-time field, which is excluded from the determinism surface.
fn strip_elapsed(v: &mut Value) {
    if let Some(obj) = v.as_object_mut() {
        obj.remove("elapsed_seconds");
    }
}

const MONOTONE_CSV: &str = "y,w,dom\n\
    1.0,10,1\n2.0,10,1\n1.5,12,1\n\
    3.0,10,2\n4.0,10,2\n3.5,11,2\n\
    5.0,10,3\n6.0,10,3\n5.5,13,3\n";

const NONMONOTONE_CSV: &str = "y,w,dom\n\
    5.0,10,1\n6.0,10,1\n5.5,12,1\n7.0,11,1\n\
    3.0,10,2\n4.0,10,2\n3.5,11,2\n4.5,10,2\n\
    5.0,10,3\n6.0,10,3\n5.5,13,3\n6.5,12,3\n";

#[test]
fn monotone_data_reports_tie_and_constrained_choice() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("m.csv");
    write(&input, MONOTONE_CSV);
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--domain-col",
            "dom",
            "--conditional-draws",
            "500",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    assert_eq!(report["schema"], 1);
    let cic = &report["cic"];
    assert_eq!(cic["constrained"], cic["unconstrained"]);
    assert_eq!(cic["chosen"], "constrained");
    assert_eq!(cic["sse"], 0.0);
    for (est, ci) in report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .zip(report["ci"].as_array().unwrap())
    {
        assert_eq!(est["unconstrained"], est["constrained"]);
        assert_eq!(
            ci["unconstrained"]["half_width"].as_f64().unwrap(),
            ci["constrained"]["half_width"].as_f64().unwrap()
        );
    }
    assert_eq!(report["tests"]["wald"]["p_value"], 1.0);
    assert!(report["config"]["covariance_mode"] == "independent-approximation");
}

#[test]
fn nonmonotone_data_pools_and_tightens_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nm.csv");
    write(&input, NONMONOTONE_CSV);
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--domain-col",
            "dom",
            "--conditional-draws",
            "2000",
            "--seed",
            "7",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    // domains 1..2 must pool: constrained estimates nondecreasing
    let cons: Vec<f64> = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["constrained"].as_f64().unwrap())
        .collect();
    assert!(cons.windows(2).all(|w| w[0] <= w[1]));
    let unc: Vec<f64> = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["unconstrained"].as_f64().unwrap())
        .collect();
    assert!(unc[0] > unc[1], "fixture should violate monotonicity");
    assert!(report["cic"]["sse"].as_f64().unwrap() > 0.0);
    // pooling reduced the estimated variance on the pooled domains, so the
    // constrained bands are tighter there
    for ci in report["ci"].as_array().unwrap().iter().take(2) {
        let vu = ci["unconstrained"]["variance"].as_f64().unwrap();
        let vc = ci["constrained"]["variance"].as_f64().unwrap();
        if vc < vu {
            assert!(
                ci["constrained"]["half_width"].as_f64().unwrap()
                    < ci["unconstrained"]["half_width"].as_f64().unwrap()
            );
        }
    }
    let wald = &report["tests"]["wald"];
    assert_eq!(wald["available"], true);
    assert_eq!(wald["blocks"], 2);
    assert_eq!(wald["df"], 1);
    let cond = &report["tests"]["conditional"];
    assert!(cond["p0"].as_f64().unwrap() > 0.0);
}

#[test]
fn weighted_mean_and_degenerate_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.csv");
    // two units in one domain, a single unit in the other
    write(&input, "y,w,dom\n2.0,2,1\n4.0,4,1\n9.0,3,2\n");
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--domain-col",
            "dom",
            "--conditional-draws",
            "0",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    let est = &report["estimates"][0];
    // Hajek mean = (2*2 + 4*4)/(2 + 4) = 10/3
    assert!((est["unconstrained"].as_f64().unwrap() - 10.0 / 3.0).abs() < 1e-12);
    let flags = report["flags"].as_array().unwrap();
    assert!(
        flags
            .iter()
            .any(|f| f.as_str().unwrap().starts_with("degenerate-ci")),
        "flags: {flags:?}"
    );
    // the single-unit domain has a zero variance estimate
    assert_eq!(report["ci"][1]["unconstrained"]["variance"], 0.0);
}

#[test]
fn binning_maps_edges_and_empty_bin_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("b.csv");
    write(&input, "y,w,age\n1,10,21\n2,10,24\n3,10,60\n");
    // bins [21,31) and [51,61]: works; the right edge 60 lands in the last bin
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--bin-col",
            "age",
            "--bin-edges",
            "21,31,61",
            "--conditional-draws",
            "0",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    assert_eq!(report["estimates"][0]["n"], 2);
    assert_eq!(report["estimates"][1]["n"], 1);

    // a middle bin with no observations exits with code 3
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--bin-col",
            "age",
            "--bin-edges",
            "21,31,41,61",
            "--conditional-draws",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // out-of-range bin value exits with code 2
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--bin-col",
            "age",
            "--bin-edges",
            "22,31,61",
            "--conditional-draws",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "y,w,dom\nnot_a_number,10,1\n");
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args(["--value-col", "y", "--weight-col", "w", "--domain-col", "dom"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args(["--value-col", "missing", "--weight-col", "w", "--domain-col", "dom"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_round_trip_reproduces_report_numbers_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nm.csv");
    write(&input, NONMONOTONE_CSV);
    let json_path = dir.path().join("report.json");
    let csv_path = dir.path().join("estimates.csv");
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args(["--value-col", "y", "--weight-col", "w", "--domain-col", "dom"])
        .args(["--conditional-draws", "0"])
        .arg("--out")
        .arg(&json_path)
        .arg("--csv-out")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    for (record, (est, ci)) in rdr.records().zip(
        report["estimates"]
            .as_array()
            .unwrap()
            .iter()
            .zip(report["ci"].as_array().unwrap()),
    ) {
        let record = record.unwrap();
        // shortest round-trip float formatting makes re-parsing exact
        assert_eq!(
            record[4].parse::<f64>().unwrap(),
            est["unconstrained"].as_f64().unwrap()
        );
        assert_eq!(
            record[5].parse::<f64>().unwrap(),
            est["constrained"].as_f64().unwrap()
        );
        assert_eq!(
            record[6].parse::<f64>().unwrap(),
            ci["unconstrained"]["lo"].as_f64().unwrap()
        );
        assert_eq!(
            record[9].parse::<f64>().unwrap(),
            ci["constrained"]["hi"].as_f64().unwrap()
        );
    }
}

#[test]
fn stratified_mode_uses_exact_joints() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s.csv");
    // two strata with constant weights 5 and 4
    write(
        &input,
        "y,w,dom,h\n1,5,1,a\n2,5,1,a\n3,5,2,a\n4,4,2,b\n5,4,2,b\n6,4,1,b\n",
    );
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--domain-col",
            "dom",
            "--stratum-col",
            "h",
            "--conditional-draws",
            "0",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    assert_eq!(report["config"]["covariance_mode"], "exact-stratified");

    // non-constant weights within a stratum are rejected
    let bad = dir.path().join("bad.csv");
    write(&bad, "y,w,dom,h\n1,5,1,a\n2,6,1,a\n");
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&bad)
        .args([
            "--value-col",
            "y",
            "--weight-col",
            "w",
            "--domain-col",
            "dom",
            "--stratum-col",
            "h",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_is_deterministic_modulo_elapsed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nm.csv");
    write(&input, NONMONOTONE_CSV);
    let run = || {
        let out = bin()
            .args(["estimate", "--input"])
            .arg(&input)
            .args([
                "--value-col",
                "y",
                "--weight-col",
                "w",
                "--domain-col",
                "dom",
                "--conditional-draws",
                "1000",
                "--seed",
                "11",
            ])
            .output()
            .unwrap();
        let mut v = parse_stdout(&out);
        strip_elapsed(&mut v);
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn simulate_preset_and_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    let run_to = |path: &Path| {
        let out = bin()
            .args(["simulate", "--scenario", "table1", "--reps", "40", "--seed", "5"])
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run_to(&out_a);
    run_to(&out_b);
    let mut a: Value = serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    let mut b: Value = serde_json::from_str(&std::fs::read_to_string(&out_b).unwrap()).unwrap();
    strip_elapsed(&mut a);
    strip_elapsed(&mut b);
    assert_eq!(a, b, "same arguments must give byte-identical summaries");
    assert!(a["summary"]["reps_used"].as_u64().unwrap() <= 40);

    // the config echo can be re-fed as a scenario file
    let config = a["config"].clone();
    let config_path = dir.path().join("config.json");
    write(&config_path, &serde_json::to_string(&config).unwrap());
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(&config_path)
        .args(["--reps", "10"])
        .output()
        .unwrap();
    let v = parse_stdout(&out);
    assert_eq!(v["summary"]["reps_requested"], 10);

    // a single replicate gives a degenerate proportion in {0, 1}
    let out = bin()
        .args(["simulate", "--scenario", "table1", "--reps", "1", "--seed", "5"])
        .output()
        .unwrap();
    let v = parse_stdout(&out);
    let p = v["summary"]["prop_unconstrained_cic"].as_f64().unwrap();
    assert!(p == 0.0 || p == 1.0);

    // unknown presets exit 2
    let out = bin()
        .args(["simulate", "--scenario", "table99"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ten_bin_applied_workflow_shape() {
    // ten three-year age bins; the top bins dip so pooling kicks in
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("chol.csv");
    let mut csv = String::from("ldl,weight,age\n");
    let mut state = 9_676_420_031u64;
    let mut next = || {
        // small deterministic LCG, just to spread values
        state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
        ((state >> 33) as f64) / (u32::MAX as f64 / 2.0) - 1.0
    };
    for i in 0..400 {
        let age = 21 + (i * 7) % 40; // 21..=60
        let bin = (age - 21) / 4;
        let mean = if bin >= 8 { 120.0 } else { 100.0 + 3.0 * bin as f64 };
        let ldl = mean + 12.0 * next();
        let weight = 40.0 + 10.0 * (1.0 + next());
        csv.push_str(&format!("{ldl:.3},{weight:.3},{age}\n"));
    }
    write(&input, &csv);
    let out = bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--value-col",
            "ldl",
            "--weight-col",
            "weight",
            "--bin-col",
            "age",
            "--bin-edges",
            "21,25,29,33,37,41,45,49,53,57,61",
            "--conditional-draws",
            "2000",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    let report = parse_stdout(&out);
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 10);
    assert_eq!(estimates[0]["label"], "21-25");
    let cons: Vec<f64> = estimates
        .iter()
        .map(|e| e["constrained"].as_f64().unwrap())
        .collect();
    assert!(cons.windows(2).all(|w| w[0] <= w[1]));
    // both criterion values are present and the decision matches them
    let cic = &report["cic"];
    let (c, u) = (
        cic["constrained"].as_f64().unwrap(),
        cic["unconstrained"].as_f64().unwrap(),
    );
    assert_eq!(cic["chosen"] == "constrained", u >= c);
    assert!(report["tests"]["conditional"]["available"].as_bool().unwrap());
}

#[test]
fn table_command_prints_rows_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("t8.json");
    let out = bin()
        .args(["table", "--table", "8", "--scale", "desk", "--reps", "30", "--seed", "2"])
        .arg("--out")
        .arg(&json_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("CIC_s"));
    assert!(text.contains("MSE(con)/MSE(unc)"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 7);
    assert_eq!(v["table"], 8);

    let out = bin()
        .args(["table", "--table", "12"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
