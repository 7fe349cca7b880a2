use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn rbse(args: &[&str], out_env: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbse"))
        .args(args)
        .env("ARBSE_OUT_DIR", out_env)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn smoke_manifest(dir: &Path, arms: &str) -> PathBuf {
    let path = dir.join("manifest.json");
    let text = format!(
        r#"{{"arms": {arms}, "auc_levels": [0.7, 0.75, 0.8, 0.85, 0.9, 0.95], "reps": 2, "phrases_per_session": 3,
            "simulation": {{"rng_seed": 9}}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

const TWO_ARMS: &str = r#"[{"paradigm": "rsvp_random", "trials_per_sequence": 14},
                           {"paradigm": "arsvp", "trials_per_sequence": 14}]"#;

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rbse(&["--help"], dir.path())), 0);
    assert_eq!(code(&rbse(&["--version"], dir.path())), 0);
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rbse(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&rbse(&["calibrate"], dir.path())), 1);
    assert_eq!(code(&rbse(&["calibrate", "--auc", "1.5"], dir.path())), 1);
    assert_eq!(code(&rbse(&["simulate", "--manifest", "/nonexistent.json"], dir.path())), 1);
}

#[test]
fn gaussian_calibration_reports_separation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let run = rbse(&["calibrate", "--auc", "0.8", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let v = read_json(&out);
    assert!((v["separation"].as_f64().unwrap() - 1.190_232).abs() < 1e-4);
    assert!(v["sigma"]["sigma_plus"].as_f64().unwrap() > 1.0);
}

#[test]
fn synthetic_calibration_without_separation_is_chance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let run = rbse(
        &["calibrate", "--synth", "--separation", "0", "--dims", "8", "--seed", "3", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let auc = read_json(&out)["auc"].as_f64().unwrap();
    assert!((auc - 0.5).abs() < 0.08, "auc {auc}");
}

#[test]
fn env_output_dir_is_used_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let run = rbse(&["calibrate", "--auc", "0.7"], dir.path());
    assert_eq!(code(&run), 0);
    assert!(dir.path().join("evidence_model.json").is_file());
}

#[test]
fn smoke_simulation_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = smoke_manifest(dir.path(), TWO_ARMS);
    let sim = dir.path().join("sim");
    let start = Instant::now();
    let run = rbse(
        &["simulate", "--manifest", manifest.to_str().unwrap(), "--out", sim.to_str().unwrap()],
        dir.path(),
    );
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for name in ["sessions.csv", "summary.json", "ttd_scatter.csv", "ppc_auc.csv"] {
        assert!(sim.join(name).is_file(), "{name}");
    }
    let sessions = std::fs::read_to_string(sim.join("sessions.csv")).unwrap();
    // 2 arms x 6 users x 2 reps x 3 phrases plus the header.
    assert_eq!(sessions.lines().count(), 2 * 6 * 2 * 3 + 1);
    let summary = read_json(&sim.join("summary.json"));
    assert_eq!(summary["arms"].as_array().unwrap().len(), 2);

    let cmp = dir.path().join("cmp.csv");
    let s = sim.to_str().unwrap();
    let run = rbse(
        &["compare", s, s, "--arm-a", "arsvp", "--arm-b", "rsvp_random", "--out", cmp.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&cmp).unwrap();
    assert!(text.starts_with("metric,n,statistic"));
}

#[test]
fn self_comparison_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = smoke_manifest(dir.path(), TWO_ARMS);
    let sim = dir.path().join("sim");
    let run = rbse(&["simulate", "--manifest", manifest.to_str().unwrap(), "--out", sim.to_str().unwrap()], dir.path());
    assert_eq!(code(&run), 0);
    let s = sim.to_str().unwrap();
    let run = rbse(&["compare", s, s, "--arm-a", "arsvp", "--arm-b", "arsvp"], dir.path());
    assert_eq!(code(&run), 2);
}

#[test]
fn unknown_manifest_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"arms": [], "auc_levels": [0.8], "colour": "blue"}"#).unwrap();
    let run = rbse(&["simulate", "--manifest", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("colour"));
}

#[test]
fn infeasible_arm_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = smoke_manifest(dir.path(), r#"[{"paradigm": "rcp", "rows": 2, "cols": 3}]"#);
    let sim = dir.path().join("sim");
    let run = rbse(&["simulate", "--manifest", manifest.to_str().unwrap(), "--out", sim.to_str().unwrap()], dir.path());
    assert_eq!(code(&run), 1);
    assert!(!sim.exists());
}

#[test]
fn codebooks_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let rcp = rbse(&["codebook", "rcp"], dir.path());
    assert_eq!(code(&rcp), 0);
    let text = String::from_utf8(rcp.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 28);
    assert!(rows.iter().all(|r| r.ends_with(",2")));

    let pool = rbse(&["codebook", "alp-pool"], dir.path());
    assert_eq!(String::from_utf8(pool.stdout).unwrap().lines().count(), 41 + 1);

    let out = dir.path().join("alp.csv");
    assert_eq!(code(&rbse(&["codebook", "alp", "--out", out.to_str().unwrap()], dir.path())), 0);
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 28 + 1);
}
