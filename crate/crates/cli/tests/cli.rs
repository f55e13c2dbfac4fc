use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gibbsrelax"));
    c.env_remove("GIBBSRELAX_CAP");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn random_model(n: usize, seed: u64) -> String {
    let m = gibbsrelax::model::random_ising(n, 0.4, 0.2, &mut gibbsrelax::rng::rng_from_seed(seed));
    gibbsrelax::io::ising_to_json(&m)
}

#[test]
fn exact_two_spin() {
    let dir = tempfile::tempdir().unwrap();
    for beta in [0.0f64, 0.5, 2.0] {
        let path = write(dir.path(), "two.json", &format!(r#"{{"n": 2, "J": [[0, {beta}], [{beta}, 0]]}}"#));
        let v = json_of(&run(&["exact", "--model", &path, "--json"]));
        assert_eq!(v["schema_version"], "1");
        assert_eq!(v["config"]["model"], path.as_str());
        let f = v["result"]["free_energy"].as_f64().unwrap();
        assert!((f - (2.0 * beta.exp() + 2.0 * (-beta).exp()).ln()).abs() < 1e-12);
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"n\": 2, \"J\": ");
    let out = run(&["exact", "--model", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model JSON"));

    let missing = run(&["exact", "--model", "/nonexistent/model.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(run(&["sa"]).status.code(), Some(1));

    let good = write(dir.path(), "m.json", &random_model(6, 1));
    assert_eq!(run(&["sa", "--model", &good, "--level", "2", "--eps", "-1"]).status.code(), Some(1));
    let capped = bin().args(["exact", "--model", &good]).env("GIBBSRELAX_CAP", "32").output().unwrap();
    assert_eq!(capped.status.code(), Some(2));
    let junk_cap = bin().args(["exact", "--model", &good]).env("GIBBSRELAX_CAP", "lots").output().unwrap();
    assert_eq!(junk_cap.status.code(), Some(1));
}

#[test]
fn byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", &random_model(7, 2));
    for args in [
        vec!["meanfield", "--model", &path, "--restarts", "5", "--seed", "9"],
        vec!["subsample", "--model", &path, "--s", "4", "--reps", "7", "--seed", "3"],
        vec!["sk", "--n", "6", "--beta", "0.7", "--trials", "3", "--seed", "4", "--restarts", "3", "--csv"],
    ] {
        let a = run(&args);
        let b = run(&["--threads", "1"].iter().chain(&args).cloned().collect::<Vec<_>>());
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn pipeline_sandwich_and_family_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", &random_model(6, 3));
    let v = json_of(&run(&["pipeline", "--model", &path, "--level", "2"]));
    let r = &v["result"];
    let f = r["check"]["free_energy"].as_f64().unwrap();
    let (lo, up) = (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
    assert!(lo <= f + 1e-6 && f <= up + 1e-6);
    assert!(r["conditioning"]["chosen_set"].is_array());
    assert!(r["upper_gap_bound"].as_f64().unwrap() > 0.0);

    let sa = json_of(&run(&["sa", "--model", &path, "--level", "2"]));
    assert!(sa["result"]["upper_bound"].as_f64().unwrap() >= f - 1e-6);
    let fam = write(dir.path(), "fam.json", &sa["result"]["family"].to_string());
    let val = json_of(&run(&["validate", "--model", &path, "--family", &fam]));
    assert_eq!(val["result"]["family"]["valid"], true);
}

#[test]
fn round_kappa_and_sk_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", &random_model(7, 4));
    let w = json_of(&run(&["round", "--model", &path]));
    assert_eq!(w["result"]["witness"]["within_bound"], true);
    let g = json_of(&run(&["round", "--model", &path, "--ell", "2", "--source", "gibbs"]));
    assert_eq!(g["result"]["conditioning"]["bound_met"], true);

    let k = json_of(&run(&["kappa", "--model", &path, "--tmax", "3"]));
    let vals: Vec<f64> = k["result"]["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(vals.len(), 4);
    assert!(vals.windows(2).all(|w| w[1] <= w[0]));

    let out = run(&["sk", "--n", "5", "--beta", "0.5", "--trials", "4", "--restarts", "2", "--csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("trial,seed,free_energy_density"));
}
