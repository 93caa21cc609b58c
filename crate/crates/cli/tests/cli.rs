use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffmig_cli::ingest::{read_tracks, write_tracks, IngestOptions};
use serde_json::Value;
use tempfile::TempDir;

fn diffmig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffmig"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SIM: &str = r#"{
  "bootstrap": {"replicates": 200, "level": 0.9, "seed": 3},
  "simulate": {"paths": 4, "increments": 300,
               "beta": {"beta_x": 0.3, "beta_y": -0.2},
               "law": {"kind": "constant", "d": 0.5},
               "intervals": {"kind": "fixed", "values": [0.5, 1.0, 2.0], "weights": [0.3, 0.4, 0.3]},
               "seed": 11}
}"#;

fn simulate(dir: &Path, config: &str, seed: Option<&str>) -> PathBuf {
    let cfg = write(dir, "sim.json", config);
    let out = dir.join("sim");
    let mut args = vec!["simulate", "--config", s(&cfg), "--out", s(&out)];
    if let Some(seed) = seed {
        args.extend(["--seed", seed]);
    }
    let o = diffmig(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("tracks.csv")
}

#[test]
fn simulate_round_trips_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(dir.path(), SIM, None);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# diffmig "));
    assert!(text.lines().any(|l| l.starts_with("#") && l.contains("\"beta_x\": 0.3")));

    let tracks = read_tracks(&csv, &IngestOptions::default()).unwrap();
    assert_eq!(tracks.len(), 4);
    assert!(tracks.iter().all(|t| t.len() == 301));
    let mut again = Vec::new();
    write_tracks(&mut again, &tracks, &[]).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert_eq!(String::from_utf8(again).unwrap(), body);

    let other = TempDir::new().unwrap();
    assert_eq!(std::fs::read(simulate(other.path(), SIM, None)).unwrap(), text.as_bytes());
    let reseeded = TempDir::new().unwrap();
    assert_ne!(std::fs::read(simulate(reseeded.path(), SIM, Some("99"))).unwrap(), text.as_bytes());
}

#[test]
fn estimate_report_reproduces_from_its_echo() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(dir.path(), SIM, None);
    let cfg = write(dir.path(), "est.json", r#"{"bootstrap": {"replicates": 200, "seed": 5}, "error_variance": 0.01}"#);
    let out1 = dir.path().join("a");
    let o = diffmig(&["estimate", "--config", s(&cfg), "--data", s(&csv), "--out", s(&out1), "--seed", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(out1.join("report.json")).unwrap();
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["config"]["bootstrap"]["seed"], 8);
    assert_eq!(v["paths"].as_array().unwrap().len(), 4);
    assert_eq!(v["comparison"].as_array().unwrap().len(), 16);
    assert!(v["collective"]["d_corrected"]["x"].is_number());
    assert!(v["collective"]["drift_significant"]["x"].is_boolean());

    let echo = write(dir.path(), "echo.json", &serde_json::to_string(&v["config"]).unwrap());
    let out2 = dir.path().join("b");
    let o = diffmig(&["estimate", "--config", s(&echo), "--data", s(&csv), "--out", s(&out2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = std::fs::read_to_string(out2.join("report.json")).unwrap();
    assert_eq!(again, report);
    for f in ["estimates.csv", "comparison.csv"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap());
    }
    let est = std::fs::read_to_string(out1.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 1 + 4 * 2 + 2);
}

#[test]
fn single_path_recovers_known_parameters() {
    let dir = TempDir::new().unwrap();
    let cfg = SIM.replace("\"paths\": 4, \"increments\": 300", "\"paths\": 1, \"increments\": 3000");
    let csv = simulate(dir.path(), &cfg, None);
    let out = dir.path().join("e");
    let o = diffmig(&["estimate", "--data", s(&csv), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let boot = &v["paths"][0]["bootstrap"];
    for (key, truth) in [("beta_x", 0.3), ("beta_y", -0.2), ("d_x", 0.5), ("d_y", 0.5)] {
        let (lo, hi) = (boot[key]["lower"].as_f64().unwrap(), boot[key]["upper"].as_f64().unwrap());
        assert!(lo <= truth && truth <= hi, "{key}: {truth} not in [{lo}, {hi}]");
    }
    assert!(v["collective"]["bootstrap"].is_null());
    assert!(v["comparison"].as_array().unwrap().is_empty());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let empty = write(dir.path(), "empty.csv", "path_id,t,x,y\n");
    let o = diffmig(&["estimate", "--data", s(&empty), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = diffmig(&["estimate", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--data"));

    let bad = write(dir.path(), "bad.csv", "path_id,t,x,y\nA,0,1,2\nA,1,foo,2\n");
    let o = diffmig(&["estimate", "--data", s(&bad), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3: cannot parse x"), "{}", stderr(&o));

    let unknown = write(dir.path(), "u.json", r#"{"bogus": true}"#);
    assert_eq!(code(&diffmig(&["validate", "--config", s(&unknown)])), 1);
    assert_eq!(code(&diffmig(&["no-such-command"])), 1);
    assert_eq!(code(&diffmig(&["--help"])), 0);

    let zero_d = write(
        dir.path(),
        "z.json",
        r#"{"domain": {"lx": 1, "ly": 1}, "horizon": 1,
            "areas": [{"name": "a", "x": {"lo": 0, "hi": 1}, "y": {"lo": 0, "hi": 1}}],
            "params": {"explicit": {"beta_x": 0, "beta_y": 0, "d_x": 0, "d_y": 1}}}"#,
    );
    let o = diffmig(&["proportions", "--config", s(&zero_d), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

const AREAS: &str = r#"{"domain": {"lx": 1, "ly": 1}, "horizon": 10,
  "areas": [{"name": "sw", "x": {"lo": 0, "hi": 0.5}, "y": {"lo": 0, "hi": 0.5}},
            {"name": "band", "x": {"lo": 0.2, "hi": 0.7}, "y": {"lo": 0.1, "hi": 0.9}}],
  "final_areas": [
    {"name": "w", "x": {"lo": 0, "hi": 0.5}, "y": {"lo": 0, "hi": 1}},
    {"name": "e", "x": {"lo": 0.5, "hi": 1}, "y": {"lo": 0, "hi": 1}},
    {"name": "all", "x": {"lo": 0, "hi": 1}, "y": {"lo": 0, "hi": 1}}],
  "params": {"explicit": {"beta_x": 0, "beta_y": 0, "d_x": 1, "d_y": 1}}}"#;

#[test]
fn proportions_matrix_shape_and_limits() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.json", AREAS);
    let o = diffmig(&["proportions", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("proportions.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "source,initial,w,e,all,row_sum");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let f: Vec<f64> = l.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert!((f[0] - 0.5).abs() < 1e-5 && (f[1] - 0.5).abs() < 1e-5, "{l}");
        assert_eq!(f[2], 1.0);
    }
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("proportions.json")).unwrap()).unwrap();
    assert_eq!(v["matrices"][0]["source"], "explicit");
    assert_eq!(v["matrices"][0]["row_sums"].as_array().unwrap().len(), 2);

    let overlapping = write(dir.path(), "o.json", &AREAS.replace("\"horizon\": 10", "\"horizon\": 10, \"require_partition\": true"));
    let o = diffmig(&["proportions", "--config", s(&overlapping), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn proportions_from_estimated_parameters() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(dir.path(), SIM, None);
    for (source, rows) in [("collective", 2), ("per_path", 8)] {
        let cfg = write(
            dir.path(),
            "pp.json",
            &AREAS.replace(
                r#""params": {"explicit": {"beta_x": 0, "beta_y": 0, "d_x": 1, "d_y": 1}}"#,
                &format!("\"params\": \"{source}\""),
            ),
        );
        let out = dir.path().join(source);
        let o = diffmig(&["proportions", "--config", s(&cfg), "--data", s(&csv), "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = std::fs::read_to_string(out.join("proportions.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + rows, "{text}");
    }
}

#[test]
fn standardize_outputs() {
    let dir = TempDir::new().unwrap();
    let line = write(dir.path(), "line.csv", "path_id,t,x,y\nL,0,0,1\nL,1,2,1\nL,3,6,1\nL,4,8,1\n");
    let out = dir.path().join("line");
    let o = diffmig(&["standardize", "--data", s(&line), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("standardized.csv")).unwrap();
    for l in text.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[5], f[6]), ("0", "0"), "{l}");
    }
    let qq = std::fs::read_to_string(out.join("qq.csv")).unwrap();
    for l in qq.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[2], f[3]);
    }

    let csv = simulate(dir.path(), SIM, None);
    let out = dir.path().join("sim-std");
    let o = diffmig(&["standardize", "--data", s(&csv), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("standardized.csv")).unwrap();
    let u: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert_eq!(u.len(), 4 * 300 * 2);
    let var = u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64;
    assert!((var - 1.0).abs() < 0.08, "variance {var}");
}

#[test]
fn validate_quick_passes_and_corrupted_corners_fail() {
    let dir = TempDir::new().unwrap();
    let quick = serde_json::json!({ "validate": diffmig_cli::validate::ValidateSettings::quick() });
    let cfg = write(dir.path(), "q.json", &quick.to_string());
    let o = diffmig(&["validate", "--config", s(&cfg), "--out", s(dir.path())]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}\n{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    let notes: Vec<&str> = v["checks"].as_array().unwrap().iter().filter_map(|c| c["note"].as_str()).collect();
    assert!(notes.iter().any(|n| n.contains("k4(dX) = 2 k4_eps")));
    assert!(notes.iter().any(|n| n.contains("adjacent covariance")));

    let mut bad = quick.clone();
    bad["validate"]["corner_combination"] = "transposed".into();
    let cfg = write(dir.path(), "bad.json", &bad.to_string());
    let o = diffmig(&["validate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("closed_form_vs_quadrature: FAIL"));
}
