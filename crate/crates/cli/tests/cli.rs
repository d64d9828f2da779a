use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use ctbn::exact::ExactEngine;
use ctbn::fixtures;
use ctbn::model::DEFAULT_CAP;

fn ctbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctbn")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "fixtures", name].iter().collect();
    path.to_str().unwrap().to_string()
}

/// `(t, variable, value, probability)` rows after the header.
fn query_rows(text: &str) -> Vec<(f64, String, String, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,variable,value,probability"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect()
}

fn scenario_file(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

#[test]
fn exact_query_matches_library() {
    let rows = query_rows(&stdout(&ctbn(&["query", "builtin:wz", "--at", "0.7", "--var", "W"])));
    let net = fixtures::wz().unwrap();
    let engine = ExactEngine::new(&net, DEFAULT_CAP).unwrap();
    let w = net.var_by_name("W").unwrap();
    let expected = engine.marginal(&engine.transient(0.7).unwrap(), &[w]).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, p) in rows.iter().zip(expected.as_slice()) {
        assert_eq!(row.1, "W");
        assert!((row.3 - p).abs() < 1e-15);
    }
}

#[test]
fn approx_engine_on_single_clique_matches_exact() {
    for method in ["linear", "subsystem"] {
        let base = ["query", "builtin:yz", "--at", "2", "--var", "Z", "--var", "Y"];
        let exact = query_rows(&stdout(&ctbn(&base)));
        let mut args = base.to_vec();
        args.extend(["--engine", "approx", "--method", method, "--recalc", "0.5"]);
        let approx = query_rows(&stdout(&ctbn(&args)));
        assert_eq!(exact.len(), approx.len());
        for (a, b) in exact.iter().zip(&approx) {
            assert_eq!((&a.1, &a.2), (&b.1, &b.2));
            assert!((a.3 - b.3).abs() < 1e-9);
        }
    }
}

#[test]
fn drug_scenario_with_both_engines() {
    let scenario = fixture("drug_evidence.json");
    let exact = query_rows(&stdout(&ctbn(&["query", "builtin:drug", "--scenario", &scenario])));
    let approx = query_rows(&stdout(&ctbn(&[
        "query",
        "builtin:drug",
        "--scenario",
        &scenario,
        "--engine",
        "approx",
        "--uniform-fallback",
    ])));
    for rows in [&exact, &approx] {
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.0 == 6.0 && r.1 == "JointPain"));
        assert!((rows.iter().map(|r| r.3).sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let tv = 0.5 * exact.iter().zip(&approx).map(|(a, b)| (a.3 - b.3).abs()).sum::<f64>();
    assert!(tv < 0.25, "total variation {tv}");
}

#[test]
fn zero_mass_reference_fails_with_hint() {
    let out = ctbn(&["query", "builtin:drug", "--scenario", &fixture("drug_evidence.json"), "--engine", "approx"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[runtime]: "), "{err}");
    assert!(err.contains("--uniform-fallback"));
}

#[test]
fn json_rows() {
    let text = stdout(&ctbn(&["query", "builtin:wz", "--at", "1", "--var", "Z", "--json"]));
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["variable"], "Z");
    let total: f64 = rows.iter().map(|r| r["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn barometer_first_passage() {
    let text = stdout(&ctbn(&["first-passage", "builtin:barometer", "--var", "Pressure", "--value", "falling", "--grid", "0:99:1"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,cdf");
    let cdf: Vec<f64> = lines[1..101].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(cdf[0], 0.0);
    assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    let mean: f64 = lines[101].strip_prefix("mean,").unwrap().parse().unwrap();
    assert!((mean - 25.4545).abs() < 1e-3);
}

#[test]
fn first_passage_already_there() {
    let scenario = scenario_file(r#"{"format": "ctbn-scenario/1", "initial": [{"variable": "Pressure", "value": "steady"}]}"#);
    let text = stdout(&ctbn(&[
        "first-passage",
        "builtin:barometer",
        "--scenario",
        scenario.path().to_str().unwrap(),
        "--var",
        "Pressure",
        "--value",
        "steady",
        "--grid",
        "0:2:0.5",
    ]));
    assert_eq!(text, "t,cdf\n0,1\n0.5,1\n1,1\n1.5,1\n2,1\nmean,0\n");
}

#[test]
fn sampling_is_seeded() {
    let empty = stdout(&ctbn(&["sample", "builtin:wz", "--t-end", "1", "--count", "0"]));
    assert_eq!(empty, "trajectory,time,variable,new_value\n");
    let a = ctbn(&["sample", "builtin:chain3", "--t-end", "3", "--count", "50", "--seed", "9"]);
    let b = ctbn(&["sample", "builtin:chain3", "--t-end", "3", "--count", "50", "--seed", "9"]);
    assert_eq!(stdout(&a), stdout(&b));
    let c = ctbn(&["sample", "builtin:chain3", "--t-end", "3", "--count", "50", "--seed", "10"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn sampled_states_match_transient_distribution() {
    let t_end = 2.0;
    let count = 100_000;
    let text = stdout(&ctbn(&["sample", "builtin:barometer", "--t-end", "2", "--count", "100000", "--seed", "4"]));
    let net = fixtures::barometer().unwrap();
    let values = &net.variables()[0].values;
    let mut last = vec![0usize; count];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let k: usize = f[0].parse().unwrap();
        last[k] = values.iter().position(|v| v == f[3]).unwrap();
    }
    let mut freq = [0.0; 3];
    for v in last {
        freq[v] += 1.0 / count as f64;
    }
    let exact = ExactEngine::new(&net, DEFAULT_CAP).unwrap().transient(t_end).unwrap();
    let tv = 0.5 * freq.iter().zip(exact.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn experiment_on_single_clique_is_exact() {
    let text = stdout(&ctbn(&["experiment", "builtin:wz", "--grid", "0.5:3:0.5", "--recalc-list", "inf,0.5"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,tstar,recalc,t,kl"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 6 + 4);
    for row in rows {
        let kl: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(kl.abs() < 1e-9, "{row}");
    }
}

#[test]
fn invalid_network_reports_variable_and_row() {
    let bad = fixtures::WZ.replacen("[2.0, -2.0]", "[2.0, -1.0]", 1);
    let file = scenario_file(&bad);
    let out = ctbn(&["validate", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[validation]: "), "{err}");
    assert!(err.contains("'W'") && err.contains("row 1"), "{err}");
}

#[test]
fn validate_and_canonicalize_fixtures() {
    for (name, text) in fixtures::ALL {
        assert!(stdout(&ctbn(&["validate", &format!("builtin:{name}")])).starts_with("ok: "));
        let path = fixture(&format!("{name}.ctbn"));
        assert_eq!(stdout(&ctbn(&["canonicalize", &path])), text);
    }
}

#[test]
fn exit_codes() {
    let out = ctbn(&["query", "builtin:drug", "--at", "1", "--var", "Drowsy", "--cap", "100"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[cap]: "));
    let out = ctbn(&["query", "builtin:wz", "--at", "1", "--var", "Nope"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ctbn(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[usage]: "));
    let out = ctbn(&["validate", "/nonexistent/file.ctbn"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(ctbn(&["--help"]).status.success());
}
