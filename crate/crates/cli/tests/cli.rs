use std::path::Path;
use std::process::{Command, Output};

fn expou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expou"))
        .args(args)
        .env_remove("EXPOU_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = expou(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Everything after the `#` metadata lines.
fn data(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn metadata(text: &str, key: &str) -> String {
    let prefix = format!("# {key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in metadata"))
        .to_string()
}

#[test]
fn cumulants_row_and_metadata() {
    let text = stdout(&["cumulants", "--t", "1"]);
    let d = data(&text);
    let mut lines = d.lines();
    assert_eq!(lines.next(), Some("t,k1,k2,k3,k4,skew,kurt"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[2] - 0.01).abs() < 1e-15);
    assert!((row[5] + 0.217).abs() < 0.001);
    assert!(metadata(&text, "tool").contains("expou"));
    let params: serde_json::Value = serde_json::from_str(&metadata(&text, "params")).unwrap();
    assert_eq!(params["rho"], -0.9);
}

#[test]
fn invalid_parameters_give_error_record() {
    let out = expou(&["cumulants", "--rho", "2"]);
    assert!(!out.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"]["module"], "model_core");
    assert_eq!(rec["error"]["operation"], "validate");
}

#[test]
fn bad_flags_print_usage() {
    let out = expou(&["cumulants", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn parameter_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    std::fs::write(&p, r#"{"m":0.2,"alpha":5,"k":1,"rho":-0.5}"#).unwrap();
    let text = stdout(&["cumulants", "--params", p.to_str().unwrap(), "--m", "0.1"]);
    let params: serde_json::Value = serde_json::from_str(&metadata(&text, "params")).unwrap();
    assert_eq!(params["m"], 0.1);
    assert_eq!(params["alpha"], 5.0);
    let out = expou(&["cumulants", "--params", "/nonexistent.json"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_is_byte_stable_across_threads() {
    let args = ["simulate", "--paths", "500", "--t", "0.1", "--checkpoints", "0.05,0.1", "--hidden"];
    let one = stdout(&[&["--threads", "1"], &args[..]].concat());
    let three = stdout(&[&["--threads", "3"], &args[..]].concat());
    assert_eq!(data(&one), data(&three));
    assert_eq!(data(&one).lines().count(), 1 + 500 * 2);
    assert_eq!(metadata(&one, "seed"), "1");
}

#[test]
fn stats_reads_simulation_output_and_writes_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let hist = dir.path().join("hist.csv");
    stdout(&["simulate", "--paths", "3000", "--t", "0.5", "--out", sim.to_str().unwrap()]);
    let text = stdout(&["stats", "--input", sim.to_str().unwrap(), "--histogram", hist.to_str().unwrap()]);
    let d = data(&text);
    let row: Vec<&str> = d.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "3000");
    let k2: f64 = row[2].parse().unwrap();
    assert!((k2 - 0.005).abs() < 0.0015, "{k2}");
    let h = std::fs::read_to_string(&hist).unwrap();
    assert!(data(&h).starts_with("bin_lo,bin_hi,count,density\n"));

    let out = expou(&["stats", "--input", sim.to_str().unwrap(), "--column", "nope"]);
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"]["module"], "stats");
}

#[test]
fn out_dir_uses_default_names() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("nested");
    stdout(&["--out-dir", d.to_str().unwrap(), "cumulants"]);
    assert!(Path::new(&d.join("cumulants.csv")).exists());
}

#[test]
fn density_grid_and_trim() {
    let text = stdout(&["density", "--n", "65536", "--phi-max", "500", "--x=-0.5:0.5:201", "--trim", "0.01"]);
    let d = data(&text);
    let rows: Vec<(f64, f64)> = d
        .lines()
        .skip(1)
        .map(|l| {
            let (x, p) = l.split_once(',').unwrap();
            (x.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert!(rows.len() < 201 && rows.iter().all(|r| r.1 >= 0.01));
    let out = expou(&["density", "--n", "1000"]);
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"]["module"], "inversion");
}

#[test]
fn edgeworth_reports_negativity() {
    let text = stdout(&["edgeworth", "--beta", "0.5", "--points", "11"]);
    let neg: serde_json::Value = serde_json::from_str(&metadata(&text, "negativity")).unwrap();
    assert_eq!(neg["negative"], true);
    let text = stdout(&["edgeworth", "--beta", "0.005", "--points", "11"]);
    let neg: serde_json::Value = serde_json::from_str(&metadata(&text, "negativity")).unwrap();
    assert_eq!(neg["negative"], false);
}

#[test]
fn cf_reports_smoothness() {
    let text = stdout(&["cf", "--points", "501", "--phi-max", "100"]);
    let s: serde_json::Value = serde_json::from_str(&metadata(&text, "smoothness")).unwrap();
    assert_eq!(s["flagged"].as_array().unwrap().len(), 0);
    assert_eq!(data(&text).lines().count(), 502);
}

#[test]
fn reproduce_tables_small() {
    let t1 = stdout(&["reproduce", "table1", "--paths", "2000", "--dt", "0.01"]);
    let d = data(&t1);
    assert_eq!(d.lines().count(), 8);
    assert!(d.lines().nth(5).unwrap().ends_with(",,,,,,,,"));
    let t2 = stdout(&["reproduce", "table2", "--paths", "2000", "--dt", "0.01", "--horizons", "0.1,0.5"]);
    assert_eq!(data(&t2).lines().count(), 3);
    let again = stdout(&["reproduce", "table2", "--paths", "2000", "--dt", "0.01", "--horizons", "0.1,0.5"]);
    assert_eq!(data(&t2), data(&again));
}

#[test]
fn reproduce_fig_density_small() {
    let text = stdout(&[
        "reproduce", "fig-density", "--paths", "20000", "--dt", "0.01", "--n", "65536", "--phi-max", "500",
    ]);
    let norm: f64 = metadata(&text, "normalization").parse().unwrap();
    assert!((norm - 1.0).abs() < 1e-3);
    assert!(data(&text).starts_with("bin_lo,bin_hi,count,mc_density,cf_density,se,z\n"));
}

#[test]
fn calibrate_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t3.json");
    stdout(&["reproduce", "table3", "--days", "800", "--replicas", "4", "--out", out.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(doc["metadata"]["source"]["synthetic"].is_object());
    let r = &doc["result"];
    assert!(r["alpha"].as_f64().unwrap() > 0.0);
    assert!(r["rho"].as_f64().unwrap().abs() <= 1.0);

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "date,close\n2000-01-03,1\n").unwrap();
    let o = expou(&["calibrate", "--input", csv.to_str().unwrap()]);
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["module"], "calibration");
}
