use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lapgrowth");

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
        .status;
    status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const DROPLET: &str = r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "degrees": [4, 8], "seed": 7}"#;

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DROPLET);
    for cmd in ["solve-map", "zeros", "kl", "trajectory"] {
        let (a, b) = (tmp.path().join(format!("{cmd}_a")), tmp.path().join(format!("{cmd}_b")));
        assert_eq!(run(cmd, &cfg, &a, &[]), 0, "{cmd}");
        assert_eq!(run(cmd, &cfg, &b, &["--threads", "2"]), 0, "{cmd}");
        assert_eq!(files(&a), files(&b), "{cmd}");
    }
}

#[test]
fn outputs_carry_hash_and_version() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DROPLET);
    let out = tmp.path().join("o");
    assert_eq!(run("zeros", &cfg, &out, &["--dump-grid"]), 0);
    let meta = read_json(&out.join("zeros.json"));
    let hash = meta["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(meta["schema_version"], 1);
    for (name, bytes) in files(&out) {
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains(&hash), "{name}");
        assert!(text.contains(env!("CARGO_PKG_VERSION")), "{name}");
    }
    assert!(out.join("grid_n4.csv").exists() && out.join("grid_n8.csv").exists());
}

#[test]
fn seed_override_changes_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DROPLET);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("zeros", &cfg, &a, &[]), 0);
    assert_eq!(run("zeros", &cfg, &b, &["--seed", "99"]), 0);
    let (ja, jb) = (read_json(&a.join("zeros.json")), read_json(&b.join("zeros.json")));
    assert_ne!(ja["config_hash"], jb["config_hash"]);
    assert_eq!(jb["seed"], 99);
}

#[test]
fn worked_triple_solves_to_cusp_map() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[moments]\nt0 = \"0.88888888888888889\"\nbeta = \"0.88888888888888889\"\na = \"2.6666666666666667\"\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("solve-map", &cfg, &out, &[]), 0);
    let m = read_json(&out.join("map.json"));
    assert!((m["r"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((m["v"][0].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert!((m["A"][0].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(m["regime"]["tag"], "SimplyConnected");
    let boundary = fs::read_to_string(out.join("boundary.csv")).unwrap();
    assert_eq!(boundary.lines().nth(1), Some("theta,re,im,conformal_measure"));
    assert_eq!(boundary.lines().count(), 2 + 512);
}

#[test]
fn disk_parameters_for_zero_charge() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "2.25", "beta": "0", "a": "2+2i"}}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("solve-map", &cfg, &out, &[]), 0);
    let m = read_json(&out.join("map.json"));
    assert!((m["r"].as_f64().unwrap() - 1.5).abs() < 1e-14);
    assert_eq!(m["v"][0].as_f64().unwrap(), 0.0);
}

#[test]
fn doubly_connected_exits_with_regime_code() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "1", "beta": "2", "a": "0.05"}}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("solve-map", &cfg, &out, &[]), 2);
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["detail"]["regime"]["tag"], "DoublyConnected");
}

#[test]
fn bad_config_exits_with_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "-1", "beta": "0.5", "a": "3"}}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("kl", &cfg, &out, &[]), 1);
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["kind"], "input");
    let cfg = write_config(tmp.path(), "d.json", r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "colour": "red"}"#);
    assert_eq!(run("kl", &cfg, &out, &[]), 1);
    assert_eq!(run("kl", &tmp.path().join("missing.json"), &out, &[]), 1);
}

#[test]
fn validate_is_green_for_the_disk() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "1", "beta": "0", "a": "3"}, "degrees": [6, 12]}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("validate", &cfg, &out, &[]), 0);
    let v = read_json(&out.join("validate.json"));
    assert_eq!(v["all_passed"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 5);
}

#[test]
fn validate_passes_on_the_droplet() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "1", "beta": "0.5", "a": "2"}, "degrees": [8], "N": "8"}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("validate", &cfg, &out, &[]), 0);
    let v = read_json(&out.join("validate.json"));
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"gram_oracle_n8"), "{names:?}");
}

#[test]
fn density_raster_and_disk_profile() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"moments": {"t0": "1", "beta": "0.5", "a": "3"}, "degrees": [20], "density": {"svg": true}}"#);
    let out = tmp.path().join("o");
    assert_eq!(run("density", &cfg, &out, &[]), 0);
    let d = read_json(&out.join("density.json"));
    assert!((d["degrees"][0]["raster_integral"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!(fs::read_to_string(out.join("density_n20.svg")).unwrap().starts_with("<svg"));

    let cfg = write_config(tmp.path(), "d.json", r#"{"moments": {"t0": "1", "beta": "0", "a": "3"}, "degrees": [10]}"#);
    let out = tmp.path().join("d");
    assert_eq!(run("density", &cfg, &out, &[]), 0);
    let d = read_json(&out.join("density.json"));
    assert!(d["degrees"][0]["profile_sup_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn evolve_reports_nested_growth_and_cusp() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[moments]\nt0 = \"1\"\nbeta = \"0.88888888888888889\"\na = \"2.6666666666666667\"\n[evolve]\nt0_start = \"0.2\"\nsteps = 9\nsvg = true\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("evolve", &cfg, &out, &[]), 0);
    let e = read_json(&out.join("evolve.json"));
    assert_eq!(e["nested"], true);
    let (lo, hi) = (e["cusp"]["lo"].as_f64().unwrap(), e["cusp"]["hi"].as_f64().unwrap());
    assert!(hi - lo <= 1e-6 && lo <= 8.0 / 9.0 + 1e-6 && hi >= 8.0 / 9.0 - 1e-6);
    assert!(out.join("evolve.svg").exists() && out.join("boundaries.csv").exists());
}
