use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use abiot_core::config::RunConfig;
use abiot_core::sim::Scenario;
use serde_json::Value;

fn abiot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abiot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn abiot_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abiot"))
        .args(args)
        .env(key, val)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const RUN_FILES: [&str; 4] = ["metrics.csv", "events.jsonl", "exposure.pgm", "resolved-config.json"];

fn small_run_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "run",
        "--out",
        out,
        "--override",
        "field.width_m=12",
        "--override",
        "field.length_m=10",
        "--override",
        "species.count=200",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = abiot(&["run", "--out", p(&out), "--override", "species.count=200"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in RUN_FILES {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,effectiveness,coverage,energy_used_j,laps_completed,per_day_effectiveness"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    assert_eq!(row[0], "1");
    let eff: f64 = row[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&eff));
    assert_eq!(row[2], "1");
    assert!(row[3].parse::<f64>().unwrap() > 0.0);
    assert_eq!(row[4], "6");

    for line in fs::read_to_string(out.join("events.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v.as_object().unwrap().len(), 5);
        let at = |k: &str| line.find(&format!("\"{k}\":")).unwrap();
        assert!(at("day") < at("agent") && at("agent") < at("time_s"));
        assert!(at("time_s") < at("kind") && at("kind") < at("position"));
    }
}

#[test]
fn exposure_heatmap_is_plain_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = abiot(&small_run_args(p(&out), &[]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pgm = fs::read_to_string(out.join("exposure.pgm")).unwrap();
    let mut tok = pgm.split_whitespace();
    assert_eq!(tok.next(), Some("P2"));
    let nx: usize = tok.next().unwrap().parse().unwrap();
    let ny: usize = tok.next().unwrap().parse().unwrap();
    assert_eq!((nx, ny), (24, 20));
    assert_eq!(tok.next(), Some("65535"));
    let vals: Vec<u32> = tok.map(|t| t.parse().unwrap()).collect();
    assert_eq!(vals.len(), nx * ny);
    assert_eq!(vals.iter().max(), Some(&65535));
    assert!(vals.iter().all(|v| *v <= 65535));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = abiot(&small_run_args(p(out), &["--override", "sim.seed=9", "--override", "sim.days=2"]));
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in RUN_FILES {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = abiot(&small_run_args(p(&a), &["--override", "sim.seed=4"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let resolved = a.join("resolved-config.json");
    let o = abiot(&["run", "--config", p(&resolved), "--out", p(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in RUN_FILES {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn negative_width_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"field": {"width_m": -5}}"#).unwrap();
    let out = dir.path().join("out");
    let o = abiot(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("field.width_m"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"field\": {\n    \"width_m\": 30,\n  }\n}\n").unwrap();
    let o = abiot(&["run", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = abiot(&["run", "--out", p(&dir.path().join("o")), "--override", "sim.speed=3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sim.speed"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = abiot(&["run", "--config", p(&dir.path().join("nope.json")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
}

fn plan_csv(overrides: &[&str]) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.csv");
    let mut args = vec!["plan", "--out", p(&out)];
    for ov in overrides {
        args.push("--override");
        args.push(ov);
    }
    let o = abiot(&args);
    let text = fs::read_to_string(&out).unwrap_or_default();
    (code(&o), text)
}

#[test]
fn plan_matches_hand_enumerated_spiral() {
    let ov = ["field.width_m=4", "field.length_m=4", "path.dense_spacing_m=1", "path.laps=1"];
    let (c, csv) = plan_csv(&ov);
    assert_eq!(c, 0);
    let inward = [(0, 0), (3, 0), (3, 3), (0, 3), (0, 1), (1, 1), (2, 1), (2, 2), (1, 2)];
    let lap: Vec<(i32, i32)> = inward.iter().chain(inward.iter().rev().skip(1)).copied().collect();
    let mut expected = String::from("lap,seq,x_m,y_m\n");
    for (seq, (x, y)) in lap.iter().enumerate() {
        expected.push_str(&format!("0,{seq},{x},{y}\n"));
    }
    assert_eq!(csv, expected);

    let (c6, csv6) = plan_csv(&["field.width_m=4", "field.length_m=4", "path.dense_spacing_m=1", "path.laps=6"]);
    assert_eq!(c6, 0);
    assert_eq!(csv6.lines().count() - 1, 6 * (csv.lines().count() - 1));
    assert!(csv6.lines().last().unwrap().starts_with("5,16,"));
}

#[test]
fn plan_rejects_empty_region() {
    let (c, _) = plan_csv(&[r#"path.region={"x0":2,"y0":0,"x1":2,"y1":10}"#]);
    assert_eq!(c, 2);
}

fn sweep(out: &Path, threads: &str) -> String {
    let o = abiot_env(
        &[
            "sweep",
            "--out",
            p(out),
            "--param",
            "path.laps",
            "--values",
            "2,4,6",
            "--seeds",
            "5",
            "--override",
            "species.count=300",
        ],
        "ABIOT_SIM_THREADS",
        threads,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::read_to_string(out.join("sweep.csv")).unwrap()
}

#[test]
fn sweep_is_complete_ordered_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = sweep(&dir.path().join("a"), "1");
    let b = sweep(&dir.path().join("b"), "3");
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param,value,seed,effectiveness,coverage,energy_used_j,laps_completed"
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 15);
    let mut means = Vec::new();
    for (i, laps) in ["2", "4", "6"].iter().enumerate() {
        let block = &rows[i * 5..(i + 1) * 5];
        for (s, r) in block.iter().enumerate() {
            assert_eq!(r[0], "path.laps");
            assert_eq!(&r[1], laps);
            assert_eq!(r[2], (s + 1).to_string());
            assert_eq!(&r[6], laps);
        }
        means.push(block.iter().map(|r| r[3].parse::<f64>().unwrap()).sum::<f64>() / 5.0);
    }
    assert!(means[0] <= means[1] && means[1] <= means[2], "{means:?}");
}

fn calibrate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "calibrate",
        "--out",
        p(out),
        "--k-values",
        "0.1,0.11814609167515995,0.13",
        "--i-ref-values",
        "0.16",
    ];
    args.extend_from_slice(extra);
    abiot(&args)
}

#[test]
fn calibration_recovers_the_committed_constants() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let o = calibrate(&a, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["ok"], Value::Bool(true));
    let defaults = RunConfig::default().sim.calibration;
    assert_eq!(v["calibration"]["k"].as_f64().unwrap(), defaults.k);
    assert_eq!(v["calibration"]["i_ref"].as_f64().unwrap(), defaults.i_ref);
    assert!(v["max_abs_error"].as_f64().unwrap() <= 0.03);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 3);
    assert_eq!(v["seeds"], 20);

    let o = calibrate(&b, &["--override", "sim.calibration.k=0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn unreachable_target_fails_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.json");
    let o = calibrate(&out, &["--target", "standalone=1.0", "--seeds", "4"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["ok"], Value::Bool(false));
    assert!(v["max_abs_error"].as_f64().unwrap() > 0.03);
    assert!(v["best"]["k"].as_f64().is_some());
}

fn assignments_file(dir: &Path, split_a: f64, split_b: f64) -> PathBuf {
    let path = dir.join("cells.json");
    let doc = serde_json::json!([
        {"agent_id": 0, "cell": {"x0": 0.0, "y0": 0.0, "x1": split_a, "y1": 30.0}, "neighbors": [1]},
        {"agent_id": 1, "cell": {"x0": split_b, "y0": 0.0, "x1": 30.0, "y1": 30.0}, "neighbors": [0]}
    ]);
    fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn validate_partition_reports_and_signals() {
    let dir = tempfile::tempdir().unwrap();
    let good = assignments_file(dir.path(), 15.0, 15.0);
    let o = abiot(&["validate-partition", p(&good)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ok"], Value::Bool(true));

    let bad = assignments_file(dir.path(), 16.0, 15.0);
    let o = abiot(&["validate-partition", p(&bad)]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ok"], Value::Bool(false));
    assert!((v["overlap_area_m2"].as_f64().unwrap() - 30.0).abs() < 1e-9);
}

#[test]
fn coordinated_run_with_gap_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cells = r#"swarm.assignments=[
        {"agent_id":0,"cell":{"x0":0,"y0":0,"x1":14,"y1":30},"neighbors":[]},
        {"agent_id":1,"cell":{"x0":15,"y0":0,"x1":30,"y1":30},"neighbors":[]}]"#;
    let out = dir.path().join("o");
    let o = abiot(&["run", "--out", p(&out), "--override", "sim.mode=coordinated", "--override", cells]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["gap_area_m2"].as_f64().unwrap() - 30.0).abs() < 1e-9);
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn committed_default_config_matches_built_in_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let text = fs::read_to_string(path).unwrap();
    let cfg = RunConfig::from_json_str(&text, &[]).unwrap();
    assert_eq!(cfg, RunConfig::default());
    Scenario::from_config(&cfg).unwrap();
}
