use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regenjump"));
    c.env_remove("REGENJUMP_OUT");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(format!("{name}.json"));
    fs::write(&p, body).unwrap();
    p
}

fn run(out: &Path, config: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("--out")
        .arg(out)
        .args(extra)
        .arg("run")
        .arg(config)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

const SIMULATE: &str = r#"{
  "name": "smoke",
  "seed": 42,
  "model": { "kind": "cir" },
  "experiment": { "kind": "simulate", "settings": { "x0": [1.0], "dt": 0.01, "horizon": 1.0, "paths": 10 } }
}"#;

#[test]
fn minimal_simulate_writes_three_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke", SIMULATE);
    let out = run(&tmp.path().join("runs"), &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("runs/smoke");
    assert_eq!(files(&dir), ["manifest.json", "summary.json", "terminals.csv"]);
    let terminals = fs::read_to_string(dir.join("terminals.csv")).unwrap();
    assert_eq!(terminals.lines().count(), 11);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["experiment"]["settings"]["paths"], 10);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let body = SIMULATE.replace("\"paths\": 10", "\"paths\": 50, \"record_paths\": 3");
    let cfg = write_config(tmp.path(), "smoke", &body);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&a, &cfg, &[]).status.success());
    assert!(run(&b, &cfg, &[]).status.success());
    for f in ["terminals.csv", "paths.csv"] {
        let x = fs::read(a.join("smoke").join(f)).unwrap();
        let y = fs::read(b.join("smoke").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between reruns");
    }
    // a different seed on the command line changes the draws
    let c = tmp.path().join("c");
    assert!(run(&c, &cfg, &["--seed", "43"]).status.success());
    assert_ne!(
        fs::read(a.join("smoke/terminals.csv")).unwrap(),
        fs::read(c.join("smoke/terminals.csv")).unwrap()
    );
}

#[test]
fn short_equilibrium_horizon_fails_the_monotonicity_check() {
    // From a start far in the tail, the laws at t = 0.1 and 0.2 are both
    // almost disjoint from the stationary one, so their TV intervals overlap.
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "eq",
        r#"{
  "name": "short-equilibrium",
  "seed": 5,
  "model": { "kind": "cir", "params": { "sigma": 4.0, "d": 0.5, "b": 0.5, "a": 0.1, "cuts": [1.0, 10.0] } },
  "experiment": {
    "kind": "equilibrium",
    "settings": {
      "reference": { "x0": [10.0], "paths": 300, "dt": 0.02, "burn_in": 30.0, "thin": 5.0, "per_path": 4 },
      "starts": [[50.0]],
      "t_list": [0.1, 0.2],
      "paths": 300,
      "dt": 0.02,
      "replicates": 50
    }
  },
  "checks": ["monotone"]
}"#,
    );
    let out = run(&tmp.path().join("runs"), &cfg, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed: monotone"));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("runs/short-equilibrium/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
    let checks = summary["checks"].as_array().unwrap();
    let monotone = checks.iter().find(|c| c["name"] == "monotone").unwrap();
    assert_eq!(monotone["passed"], false);
}

#[test]
fn unknown_keys_and_checks_are_errors() {
    let tmp = TempDir::new().unwrap();
    let bad = SIMULATE.replace("\"seed\": 42", "\"seed\": 42, \"colour\": \"red\"");
    let cfg = write_config(tmp.path(), "bad", &bad);
    let out = run(&tmp.path().join("runs"), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let bad = SIMULATE.replace("\"seed\": 42", "\"seed\": 42, \"checks\": [\"no_such_check\"]");
    let cfg = write_config(tmp.path(), "bad2", &bad);
    assert_eq!(run(&tmp.path().join("runs"), &cfg, &[]).status.code(), Some(1));

    let bad = SIMULATE.replace("\"dt\": 0.01", "\"dt\": -0.01");
    let cfg = write_config(tmp.path(), "bad3", &bad);
    assert_eq!(run(&tmp.path().join("runs"), &cfg, &[]).status.code(), Some(1));

    let bad = SIMULATE.replace("\"kind\": \"simulate\"", "\"kind\": \"levitate\"");
    let cfg = write_config(tmp.path(), "bad4", &bad);
    assert_eq!(run(&tmp.path().join("runs"), &cfg, &[]).status.code(), Some(1));
}

#[test]
fn runs_do_not_overwrite_each_other() {
    let tmp = TempDir::new().unwrap();
    let first = write_config(
        tmp.path(),
        "first",
        &SIMULATE.replace("\"seed\": 42", "\"seed\": 42, \"output\": \"shared\""),
    );
    let second = write_config(
        tmp.path(),
        "second",
        &SIMULATE
            .replace("\"smoke\"", "\"other\"")
            .replace("\"seed\": 42", "\"seed\": 42, \"output\": \"shared\""),
    );
    let root = tmp.path().join("runs");
    assert!(run(&root, &first, &[]).status.success());
    let out = run(&root, &second, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing"));
    // the same experiment may be rerun in place
    assert!(run(&root, &first, &[]).status.success());
}

#[test]
fn output_root_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke", SIMULATE);
    let root = tmp.path().join("env-root");
    let out = bin().env("REGENJUMP_OUT", &root).arg("run").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    assert!(root.join("smoke/terminals.csv").exists());
}

#[test]
fn pseudotrajectory_plot_schema() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "pseudo",
        r#"{
  "name": "pseudo",
  "seed": 7,
  "model": { "kind": "cir" },
  "experiment": {
    "kind": "pseudotrajectory",
    "settings": { "x0": [1.0], "dt": 0.02, "paths": 200, "t_list": [1.0, 2.0, 3.0], "horizon": 1.0, "dictionary_size": 8, "replicates": 20 }
  }
}"#,
    );
    let root = tmp.path().join("runs");
    assert!(run(&root, &cfg, &[]).status.success());
    let dir = root.join("pseudo");
    let out = bin().arg("plots").arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.join("plots/gap_curve.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["t", "gap", "ci_lo", "ci_hi"]);
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
    assert!(rows.iter().all(|r| r[2] <= r[1] && r[1] <= r[3]));
}

#[test]
fn coupling_survival_is_the_sorted_sample_tail() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "couple",
        r#"{
  "name": "couple",
  "seed": 3,
  "model": { "kind": "cir", "params": { "sigma": 0.5, "d": 4.0, "b": 1.0, "a": 8.0, "cuts": [3.0, 30.0], "rate": { "kind": "constant", "value": 1.0 } } },
  "experiment": {
    "kind": "couple",
    "settings": {
      "seeds": { "x0": [0.625], "z0": [1.5], "eta": 0.6, "mark_radius": 1.48 },
      "starts": [[0.0], [3.125]],
      "dt": 0.02,
      "horizon": 5.0,
      "pairs": 200
    }
  },
  "checks": ["certificate", "survival_nonincreasing"]
}"#,
    );
    let root = tmp.path().join("runs");
    assert!(run(&root, &cfg, &[]).status.success());
    let dir = root.join("couple");
    assert!(bin().arg("plots").arg(&dir).output().unwrap().status.success());

    // Oracle: sort the finite coupling times; censored pairs never leave.
    let mut r = csv::Reader::from_path(dir.join("coupling_times.csv")).unwrap();
    let raw: Vec<String> = r.records().map(|rec| rec.unwrap()[1].to_string()).collect();
    let n = raw.len() as f64;
    let mut taus: Vec<f64> = raw.iter().filter(|t| *t != "inf").map(|t| t.parse().unwrap()).collect();
    taus.sort_by(f64::total_cmp);

    let mut r = csv::Reader::from_path(dir.join("plots/tau_survival.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["t", "survival"]);
    let rows: Vec<(f64, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 > w[0].0));
    for (t, s) in &rows[1..] {
        let alive = taus.iter().filter(|x| *x > t).count() as f64 + (n - taus.len() as f64);
        assert!((s - alive / n).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn plots_of_an_empty_directory_fail() {
    let tmp = TempDir::new().unwrap();
    let out = bin().arg("plots").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no artifacts"));
    let out = bin().arg("plots").arg(tmp.path().join("missing")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
