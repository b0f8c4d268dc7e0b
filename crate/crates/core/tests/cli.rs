use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GEN: &str = r#"{
  "spec": {"class": "MNL",
           "layout": {"crash": [{"name": "constant", "kind": "fixed"}, {"name": "speed", "kind": "fixed"}, {"name": "night", "kind": "fixed"}],
                      "near_crash": [{"name": "constant", "kind": "fixed"}, {"name": "speed", "kind": "fixed"}]}},
  "truth": {"beta_crash": [-2.0, 0.9, 0.5], "beta_nearcrash": [-1.0, 0.4], "omega_sd": [], "theta": [], "tau": 0.0, "kappa": null},
  "n_events": 1200,
  "covariates": [{"name": "speed", "distribution": {"kind": "normal", "mean": 0.0, "sd": 1.0}},
                 {"name": "night", "distribution": {"kind": "bernoulli", "p": 0.3}}],
  "seed": 4
}"#;

fn volatix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volatix"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthetic attributes plus a fitted MNL in `dir`.
fn fitted(dir: &Path) {
    fs::write(dir.join("gen.json"), GEN).unwrap();
    let v: serde_json::Value = serde_json::from_str(GEN).unwrap();
    fs::write(dir.join("spec.json"), v["spec"].to_string()).unwrap();
    let o = volatix(dir, &["synth", "choice", "--config", "gen.json", "--out", "attrs.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = volatix(dir, &["fit", "--attributes", "attrs.csv", "--spec", "spec.json", "--out", "fit.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn featurize_empty_file_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("traces.csv"), "").unwrap();
    let o = volatix(dir.path(), &["featurize", "--traces", "traces.csv", "--out", "features.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert!(out.lines().count() <= 1, "only a header expected, got {out:?}");
}

#[test]
fn synthetic_traces_featurize_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tc.json"), r#"{"n_events": 30, "seed": 9}"#).unwrap();
    let o = volatix(d, &["synth", "traces", "--config", "tc.json", "--out", "traces.csv", "--events", "events.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = volatix(d, &["featurize", "--traces", "traces.csv", "--events", "events.csv", "--out", "features.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let features = fs::read_to_string(d.join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 31);
    assert!(d.join("features.csv.rejects.csv").exists());
    assert!(d.join("features.csv.manifest.json").exists());
}

#[test]
fn malformed_timestamp_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("traces.csv"),
        "event_id,event_type,t_sec,speed_kph,accel_long_mps2,accel_lat_mps2\n\
         e1,baseline,0.0,50,0.1,0.0\n\
         e1,baseline,zero point one,50,0.2,0.0\n",
    )
    .unwrap();
    let o = volatix(dir.path(), &["featurize", "--traces", "traces.csv", "--out", "f.csv"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("t_sec"), "{msg}");
}

#[test]
fn sidecar_orphan_is_a_join_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut trace = String::from("event_id,event_type,t_sec,speed_kph,accel_long_mps2,accel_lat_mps2\n");
    for k in 0..20 {
        trace.push_str(&format!("e1,baseline,{:.1},50,{:.2},0.1\n", k as f64 * 0.1, (k as f64).sin()));
    }
    fs::write(d.join("traces.csv"), trace).unwrap();
    fs::write(d.join("events.csv"), "event_id,reaction_t_sec,impact_t_sec\nghost,1.0,2.0\n").unwrap();
    let o = volatix(d, &["featurize", "--traces", "traces.csv", "--events", "events.csv", "--out", "f.csv"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("ghost"));
}

#[test]
fn zero_draws_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let spec = r#"{"class": "RP_MNL", "draws": 0,
        "layout": {"crash": [{"name": "constant", "kind": "fixed"}, {"name": "speed", "kind": "normal"}],
                   "near_crash": [{"name": "constant", "kind": "fixed"}]}}"#;
    fs::write(d.join("bad.json"), spec).unwrap();
    let o = volatix(d, &["fit", "--attributes", "attrs.csv", "--spec", "bad.json", "--out", "x.json"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!d.join("x.json").exists());
}

#[test]
fn refit_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let first = fs::read(d.join("fit.json")).unwrap();
    let manifest = fs::read(d.join("fit.json.manifest.json")).unwrap();
    let o = volatix(d, &["fit", "--attributes", "attrs.csv", "--spec", "spec.json", "--out", "fit.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(first, fs::read(d.join("fit.json")).unwrap());
    assert_eq!(manifest, fs::read(d.join("fit.json.manifest.json")).unwrap());

    let o = volatix(d, &["fit", "--attributes", "attrs.csv", "--spec", "spec.json", "--out", "fit3.json", "--threads", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(first, fs::read(d.join("fit3.json")).unwrap());
}

#[test]
fn fit_prints_summary_and_recovers_signs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let fit: serde_json::Value = serde_json::from_slice(&fs::read(d.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["converged"], true);
    let est = &fit["parameters"];
    let value = |name: &str| {
        est.as_array().unwrap().iter().find(|p| p["name"] == name).unwrap()["estimate"].as_f64().unwrap()
    };
    assert!((value("crash:speed") - 0.9).abs() < 0.3);
    assert!(value("crash:constant") < -1.0);
}

#[test]
fn curve_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let o = volatix(
        d,
        &["curve", "--fit", "fit.json", "--attributes", "attrs.csv", "--covariate", "speed", "--from", "-2", "--to", "2", "--points", "50"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 150);

    let o = volatix(
        d,
        &["curve", "--fit", "fit.json", "--attributes", "attrs.csv", "--covariate", "speed", "--grid", "-1,0,1"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1 + 9);
}

#[test]
fn effects_sum_to_zero_per_covariate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let o = volatix(d, &["effects", "--fit", "fit.json", "--attributes", "attrs.csv", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["effects"].as_array().or_else(|| v.as_array()).expect("effect rows");
    assert!(!rows.is_empty());
    for r in rows {
        let s: f64 = r["effects"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!(s.abs() < 1e-10, "{r}");
    }
    let night = rows.iter().find(|r| r["covariate"] == "night").unwrap();
    assert_eq!(night["kind"], "discrete_change");
}

#[test]
fn unknown_covariate_and_missing_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let o = volatix(d, &["simulate", "--fit", "fit.json", "--attributes", "attrs.csv", "--covariate", "nope", "--percent", "10"]);
    assert_eq!(code(&o), 2);
    let o = volatix(d, &["effects", "--fit", "absent.json", "--attributes", "attrs.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unconverged_fit_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fitted(d);
    let mut fit: serde_json::Value = serde_json::from_slice(&fs::read(d.join("fit.json")).unwrap()).unwrap();
    fit["converged"] = serde_json::Value::Bool(false);
    fs::write(d.join("stale.json"), fit.to_string()).unwrap();
    let o = volatix(d, &["effects", "--fit", "stale.json", "--attributes", "attrs.csv"]);
    assert_eq!(code(&o), 3);
    let o = volatix(d, &["effects", "--fit", "stale.json", "--attributes", "attrs.csv", "--force"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
