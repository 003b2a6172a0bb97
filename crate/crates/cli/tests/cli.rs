use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_driftctl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn driftctl")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_NOISE: &str = r#"{
  "seed": 11,
  "noise": {
    "duration_s": 3000, "dt_s": 0.5,
    "components": [
      {"ou": {"relaxation_rate_per_s": 0.002, "stationary_std_hz": 2e5}},
      {"sine": {"amplitude_hz": 1e5, "frequency_hz": 0.004}}
    ]
  },
  "tracker": {"lia": {"window_s": 10, "update_period_s": 1, "sigma_floor_hz": 2e4, "capture_range_hz": 1e9}},
  "control": {"scheme": "feedback", "update_period_s": 2},
  "predictor": {
    "arch": {"hidden": 4, "m": 8, "n": 5},
    "train": {"epochs": 3, "batch_size": 32},
    "training_duration_s": 1500
  }
}"#;

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_twice_is_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL_NOISE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
    let first = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(first.starts_with("time_s,freq_offset_hz\n"));
    assert_eq!(first.lines().count(), 1 + 6001);
}

#[test]
fn no_temporary_files_left_behind() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL_NOISE);
    let out = tmp.path().join("o");
    assert!(run(&["loop", "--config", path_str(&cfg), "--out", path_str(&out)]).status.success());
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(!name.ends_with(".tmp"), "{name}");
    }
    let m = manifest(&out);
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|r| r["path"].as_str().unwrap()).collect();
    for f in ["residual.csv", "correction.csv", "estimates.csv", "run.json"] {
        assert!(listed.contains(&f), "{f} missing from {listed:?}");
    }
}

#[test]
fn seed_override_is_recorded_and_changes_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL_NOISE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["generate", "--config", path_str(&cfg), "--out", path_str(&a)]).status.success());
    assert!(run(&["generate", "--config", path_str(&cfg), "--out", path_str(&b), "--seed", "12"]).status.success());
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(manifest(&b)["seed"], 12);
    assert_eq!(manifest(&b)["config"]["seed"], 12);
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"noise": {"components": [], "duration_s": 10, "dt_s": 1}}"#);
    let o = run(&["generate", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL_NOISE.replace("\"window_s\": 10", "\"window_s\": 10, \"windw\": 3");
    let cfg = write_config(tmp.path(), "c.json", &text);
    let o = run(&["track", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tracker") && err.contains("windw"), "{err}");
}

#[test]
fn unreadable_trace_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("t.csv"), "time_s,freq_offset_hz\n0,1\n1,oops\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"seed": 1, "trace_path": "t.csv", "tracker": {"lia": {"window_s": 2, "update_period_s": 1, "sigma_floor_hz": 0, "capture_range_hz": 1e9}}}"#,
    );
    let o = run(&["track", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_then_feedforward_loop_references_model_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL_NOISE);
    let train_dir = tmp.path().join("train");
    let o = run(&["train", "--config", path_str(&cfg), "--out", path_str(&train_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = train_dir.join("model.json");
    let loop_dir = tmp.path().join("loop");
    let o = run(&[
        "loop",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&loop_dir),
        "--scheme",
        "feedforward",
        "--model",
        path_str(&model),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&loop_dir);
    let expected = manifest(&train_dir)["model_sha256"].clone();
    assert!(expected.is_string());
    assert_eq!(m["model_sha256"], expected);
    assert_eq!(m["overrides"]["scheme"], "feedforward");
    let run_json: Value = serde_json::from_str(&fs::read_to_string(loop_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["meta"]["scheme"], "feedforward");
}

#[test]
fn fit_law_recovers_known_parameters() {
    // l = 4000·ν^-0.45 + 20 kHz exactly
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("nu_hz,l_hz,l_sigma_hz,t2_star_s,flag\n");
    for nu in [0.003, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5] {
        let l = 4000.0 * f64::powf(nu, -0.45) + 20e3;
        csv.push_str(&format!("{nu},{l},1,1e-6,ok\n"));
    }
    csv.push_str("0.7,NaN,NaN,NaN,failed\n");
    let path = tmp.path().join("sweep.csv");
    fs::write(&path, csv).unwrap();
    let out = tmp.path().join("fit");
    let o = run(&["fit", "--law", path_str(&path), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let law: Value = serde_json::from_str(&fs::read_to_string(out.join("law.json")).unwrap()).unwrap();
    assert!((law["n"].as_f64().unwrap() - 0.45).abs() < 1e-4, "{law}");
    assert!((law["d_hz"].as_f64().unwrap() - 20e3).abs() < 5.0, "{law}");
    assert_eq!(law["n_points"], 7);
    assert!(law["n_sigma"].as_f64().unwrap().is_finite());
}

#[test]
fn sweep_with_failing_point_still_writes_rows() {
    let tmp = TempDir::new().unwrap();
    // the feedback point has no tracker to feed it
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
          "seed": 5,
          "noise": {"duration_s": 400, "dt_s": 0.1,
                    "components": [{"ou": {"relaxation_rate_per_s": 0.001, "stationary_std_hz": 3e5}}]},
          "ramsey": {"bias_hz": 2e6, "t_evol": {"start_s": 1e-7, "step_s": 1e-7, "count": 100},
                     "shots_per_point": 200, "shot_wall_time_s": 0.002, "start_s": 50},
          "sweep": {"points": [
            {"nu_hz": 0.1, "scheme": "ideal_feedback"},
            {"nu_hz": 0.2, "scheme": "feedback"}
          ]}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "nu_hz,l_hz,l_sigma_hz,t2_star_s,flag");
    assert_eq!(rows.len(), 3);
    assert!(rows[2].ends_with(",failed"));
    assert!(!rows[1].ends_with(",failed"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn infeasible_sweep_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
          "seed": 5,
          "noise": {"duration_s": 400, "dt_s": 0.1,
                    "components": [{"ou": {"relaxation_rate_per_s": 0.001, "stationary_std_hz": 3e5}}]},
          "ramsey": {"bias_hz": 2e6, "t_evol": {"start_s": 1e-7, "step_s": 1e-7, "count": 100},
                     "shots_per_point": 20, "shot_wall_time_s": 0.01, "start_s": 50},
          "sweep": {"points": [{"nu_hz": 1.0, "scheme": "ideal_feedback"}]}
        }"#,
    );
    let o = run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
          "seed": 9,
          "noise": {"duration_s": 2000, "dt_s": 0.1,
                    "components": [{"ou": {"relaxation_rate_per_s": 0.001, "stationary_std_hz": 3e5}}]},
          "ramsey": {"bias_hz": 2e6, "t_evol": {"start_s": 1e-7, "step_s": 1e-7, "count": 100},
                     "shots_per_point": 500, "shot_wall_time_s": 0.002, "start_s": 100},
          "sweep": {"points": [
            {"nu_hz": 0.01, "scheme": "ideal_feedback"},
            {"nu_hz": 0.05, "scheme": "ideal_feedback"},
            {"nu_hz": 0.2, "scheme": "ideal_feedback"}
          ]}
        }"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&a), "--parallel", "1"]);
    let ob = run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&b), "--parallel", "3"]);
    assert!(oa.status.code().is_some() && ob.status.code() == oa.status.code());
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());
}

#[test]
fn ramsey_without_control_uses_the_raw_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
          "seed": 3,
          "noise": {"duration_s": 200, "dt_s": 0.1, "components": [{"constant": {"offset_hz": 0}}]},
          "ramsey": {"bias_hz": 1e6, "t_evol": {"start_s": 1e-7, "step_s": 1e-7, "count": 200},
                     "shots_per_point": 10, "shot_wall_time_s": 0.002, "start_s": 10, "intrinsic_t2_s": 4e-6}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = run(&["ramsey", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let t2 = fit["decay"]["t2_star_s"].as_f64().unwrap();
    assert!((t2 - 4e-6).abs() < 1e-9, "{t2}");
    assert!(fit.get("loop").is_none());
    let o = run(&["ramsey", "--config", path_str(&cfg), "--out", path_str(&out), "--scheme", "feedback"]);
    assert_eq!(o.status.code(), Some(2));
}
