use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn harmload(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmload"))
        .args(args)
        .env_remove("HARMLOAD_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = harmload(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Full default sweep of case 9, shared by the identification tests.
fn vfd_dataset() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    let dir = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("ds.jsonl");
        ok(&["sweep", "--case", "9", "--out", s(&ds), "--jobs", "2", "--fig8", s(&dir.path().join("fig8.csv"))]);
        dir
    });
    dir.path()
}

#[test]
fn help_lists_units_and_exit_codes() {
    let top = ok(&["--help"]);
    assert!(top.contains("Exit codes: 0 success, 1 usage"));
    let sim = ok(&["simulate", "--help"]);
    assert!(sim.contains("[dimensionless, >= 1]"));
    assert!(sim.contains("[s]"));
    let sweep = ok(&["sweep", "--help"]);
    assert!(sweep.contains("--jobs") && sweep.contains("v_thd [ratio]"));
}

#[test]
fn unknown_flags_and_bad_cases_are_usage_errors() {
    let out = harmload(&["simulate", "--case", "17", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));
    let out = harmload(&["fit", "--in", "x.jsonl", "--out", "m.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = harmload(&["condition", "--in", s(&dir.path().join("absent.jsonl")), "--out", s(&dir.path().join("c.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unsettled_simulation_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = harmload(&[
        "simulate", "--case", "9", "--max-sim-time", "0.17", "--out", s(&dir.path().join("w")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steady state"));
}

#[test]
fn simulate_writes_waveform_spectra_netlist_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("idle");
    let netlist = dir.path().join("net.json");
    ok(&["simulate", "--case", "16", "--alpha", "1", "--out", s(&prefix), "--dump-netlist", s(&netlist)]);
    let side = json(&dir.path().join("idle.json"));
    assert_eq!(side["format"], "harmload-wave/1");
    let n = side["samples"].as_u64().unwrap();
    let bytes = std::fs::metadata(dir.path().join("idle.bin")).unwrap().len();
    assert_eq!(bytes, 8 * n * side["channels"].as_array().unwrap().len() as u64);
    let spec = json(&dir.path().join("idle.spectrum.json"));
    let chans = spec["channels"].as_array().unwrap();
    let i_eq = chans.iter().find(|c| c["name"] == "i_eq").unwrap();
    let i1 = &i_eq["phasors"][0];
    assert!(i1[0].as_f64().unwrap().hypot(i1[1].as_f64().unwrap()) < 1e-3);
    let v_eq = chans.iter().find(|c| c["name"] == "v_eq").unwrap();
    assert!((v_eq["phasors"][0][0].as_f64().unwrap() - 120.0).abs() < 1.0);
    assert!(json(&netlist)["elements"].as_array().unwrap().len() > 3);
    let manifest = std::fs::read_to_string(dir.path().join("harmload-manifest.jsonl")).unwrap();
    let m: Value = serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulated_desktop_current_has_desktop_distortion() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--case", "13", "--out", s(&dir.path().join("d"))]);
    let spec = json(&dir.path().join("d.spectrum.json"));
    let i_eq = spec["channels"].as_array().unwrap().iter().find(|c| c["name"] == "i_eq").unwrap().clone();
    let t = i_eq["thd"].as_f64().unwrap();
    assert!((t - 0.36).abs() <= 0.10, "{t}");
}

#[test]
fn short_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["sweep", "--case", "9", "--points", "3", "--out", s(&a), "--waveforms", s(&dir.path().join("w"))]);
    ok(&["sweep", "--case", "9", "--points", "3", "--out", s(&b), "--waveforms", s(&dir.path().join("w")), "--jobs", "1"]);
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().count(), 4);
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["format"], "harmload-ds/1");
    let first: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["source"]["waveform"], "case09_point00.json");
    assert!(dir.path().join("w/case09_point02.bin").exists());
    let manifest = std::fs::read_to_string(dir.path().join("harmload-manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
}

#[test]
fn malformed_dataset_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let ds = std::fs::read_to_string(vfd_dataset().join("ds.jsonl")).unwrap();
    let mut lines: Vec<String> = ds.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[4]).unwrap();
    rec["v"][2] = serde_json::json!([1.0]);
    lines[4] = rec.to_string();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = harmload(&["condition", "--in", s(&bad), "--out", s(&dir.path().join("c.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:5: field `v[2]`"), "{err}");
}

#[test]
fn sweep_dataset_has_nineteen_points_and_distortion_table() {
    let dir = vfd_dataset();
    let text = std::fs::read_to_string(dir.join("ds.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 20);
    let fig8 = std::fs::read_to_string(dir.join("fig8.csv")).unwrap();
    assert_eq!(fig8.lines().next().unwrap(), "case,alpha,v_thd,i_thd");
    assert_eq!(fig8.lines().count(), 20);
}

#[test]
fn fit_then_eval_reconstructs_held_out_points() {
    let dir = tempfile::tempdir().unwrap();
    let ds = vfd_dataset().join("ds.jsonl");
    let model = dir.path().join("m.json");
    ok(&["fit", "--in", s(&ds), "--train", "15", "--nprime", "4", "--out", s(&model)]);
    let m = json(&model);
    assert_eq!(m["version"], "harmload-fcm/1");
    assert_eq!(m["training"]["k_train"], 15);
    let orders: Vec<u64> = m["voltage_orders"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert!(orders.len() == 4 && orders.contains(&1) && orders.contains(&3));
    let report = dir.path().join("r.json");
    let errors = dir.path().join("errors.csv");
    let parasitic = dir.path().join("parasitic.csv");
    ok(&[
        "eval", "--model", s(&model), "--in", s(&ds), "--out", s(&report),
        "--errors-csv", s(&errors), "--parasitic-csv", s(&parasitic),
        "--reconstruct", s(&dir.path().join("rec")),
    ]);
    let r = json(&report);
    assert_eq!(r["test"].as_array().unwrap().len(), 4);
    assert!(r["summary"]["median"].as_f64().unwrap() < 0.02);
    let rec = r["points"][0]["reconstruction"].as_str().unwrap();
    assert!(Path::new(rec).exists());
    let e = std::fs::read_to_string(&errors).unwrap();
    assert_eq!(e.lines().next().unwrap(), "case,point,alpha,order,error");
    assert_eq!(e.lines().count(), 1 + 4 * 25);
    let p = std::fs::read_to_string(&parasitic).unwrap();
    assert_eq!(p.lines().count(), 5);
}

#[test]
fn condition_numbers_grow_with_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig7a.csv");
    ok(&["condition", "--in", s(&vfd_dataset().join("ds.jsonl")), "--max-orders", "10", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let cond: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(cond.len(), 10);
    assert!(cond.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)), "{cond:?}");
}

#[test]
fn order_sweep_shows_an_interior_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig7b.csv");
    let curve = dir.path().join("curve.json");
    let res = harmload(&[
        "order-sweep", "--in", s(&vfd_dataset().join("ds.jsonl")), "--train", "15", "--out", s(&out), "--json", s(&curve),
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("skipped n_prime 15"));
    let rows: Vec<(usize, f64)> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 14);
    let best = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(best.0 < 14);
    assert_eq!(json(&curve)["skipped"].as_array().unwrap().len(), 11);
}

#[test]
fn shuffled_split_follows_the_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let ds = vfd_dataset().join("ds.jsonl");
    let fit = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_harmload"))
            .args(["fit", "--in", s(&ds), "--split", "shuffle", "--nprime", "3", "--out", s(&out)])
            .env("HARMLOAD_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    let a = fit("a.json", "7");
    assert_eq!(a, fit("b.json", "7"));
    assert_ne!(a, fit("c.json", "8"));
    let out = Command::new(env!("CARGO_BIN_EXE_harmload"))
        .args(["fit", "--in", s(&ds), "--split", "shuffle", "--out", s(&dir.path().join("d.json"))])
        .env("HARMLOAD_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
