use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use closemic::campaign::CampaignConfig;
use closemic::wav::write_wav;
use closemic::{gen_pink_noise, SignalBuffer};
use serde_json::Value;

fn closemic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_closemic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn wav(dir: &Path, name: &str, signal: &SignalBuffer) -> String {
    let path = dir.join(name);
    write_wav(&path, signal).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_lists_units() {
    let o = closemic(&["optimize", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--dist-min-m",
        "--dist-max-m",
        "--angle-min-deg",
        "--angle-max-deg",
        "--grid",
        "--tol-m",
        "--frame",
        "--hop",
        "--window",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert!(text.contains("[m]") && text.contains("[deg]") && text.contains("[samples"));

    let top = closemic(&["--help"]);
    let text = String::from_utf8_lossy(&top.stdout);
    for cmd in ["campaign", "sir", "simulate", "optimize"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = closemic(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn missing_flag_names_the_flag() {
    let o = closemic(&["sir", "--source", "a.wav"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--noise"));
}

#[test]
fn sir_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_pink_noise(1.0, 44100, 3).unwrap().scaled(0.1);
    let a = wav(dir.path(), "a.wav", &s);
    let b = wav(dir.path(), "b.wav", &s);
    let o = closemic(&["sir", "--source", &a, "--noise", &b]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["sir_db"], 0.0);
    assert_eq!(v["mask_density"], 1.0);
}

#[test]
fn sir_reports_infinity_as_a_string() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_pink_noise(1.0, 44100, 3).unwrap().scaled(0.1);
    let a = wav(dir.path(), "a.wav", &s);
    let z = wav(dir.path(), "z.wav", &SignalBuffer::zeros(s.len(), 44100));
    let o = closemic(&[
        "sir",
        "--source",
        &a,
        "--noise",
        &z,
        "--window",
        "rectangular",
        "--frame",
        "1024",
        "--hop",
        "512",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["sir_db"], "inf");
}

#[test]
fn sir_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_pink_noise(1.0, 44100, 3).unwrap().scaled(0.1);
    let a = wav(dir.path(), "a.wav", &s);
    let z = wav(dir.path(), "z.wav", &SignalBuffer::zeros(s.len(), 44100));

    let missing = closemic(&["sir", "--source", &a, "--noise", "/nonexistent/n.wav"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr(&missing).contains("/nonexistent/n.wav"));

    let bad_frame = closemic(&["sir", "--source", &a, "--noise", &a, "--frame", "1000"]);
    assert_eq!(bad_frame.status.code(), Some(2));

    let bad_window = closemic(&["sir", "--source", &a, "--noise", &a, "--window", "kaiser"]);
    assert_eq!(bad_window.status.code(), Some(2));

    let silent_source = closemic(&["sir", "--source", &z, "--noise", &a]);
    assert_eq!(silent_source.status.code(), Some(4));
}

#[test]
fn simulate_writes_a_calibrated_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("render");
    let o = closemic(&[
        "simulate",
        "--scene",
        &config("scene_example.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json(&o), summary);
    let metered = |role: &str| summary[role]["metered_leq_db"].as_f64().unwrap();
    assert!((metered("target") - 100.0).abs() <= 0.01);
    assert!((metered("noise") - 94.0).abs() <= 0.01);
    assert!(summary["sir"]["sir_db"].as_f64().unwrap().is_finite());

    let target = closemic::wav::read_wav(&out.join("target.wav")).unwrap();
    let noise = closemic::wav::read_wav(&out.join("noise.wav")).unwrap();
    assert_eq!(target.len(), 88200);
    assert_eq!(noise.len(), 88200);

    // The written pair scores like the in-memory one, up to 16-bit quantization.
    let again = closemic(&[
        "sir",
        "--source",
        out.join("target.wav").to_str().unwrap(),
        "--noise",
        out.join("noise.wav").to_str().unwrap(),
    ]);
    let a = json(&again)["sir_db"].as_f64().unwrap();
    let b = summary["sir"]["sir_db"].as_f64().unwrap();
    assert!((a - b).abs() < 0.01, "{a} vs {b}");
}

#[test]
fn simulate_with_a_silent_source_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    wav(
        dir.path(),
        "silence.wav",
        &SignalBuffer::zeros(88200, 44100),
    );
    let mut scene: Value =
        serde_json::from_str(&std::fs::read_to_string(config("scene_example.json")).unwrap())
            .unwrap();
    scene["target"]["signal"] = serde_json::json!({"kind": "wav", "path": "silence.wav"});
    let path = dir.path().join("scene.json");
    std::fs::write(&path, serde_json::to_string(&scene).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = closemic(&[
        "simulate",
        "--scene",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!out.join("target.wav").exists());
}

#[test]
fn malformed_scene_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    std::fs::write(&path, r#"{"sample_rate_hz": 44100, "colour": "blue"}"#).unwrap();
    let o = closemic(&[
        "simulate",
        "--scene",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scene.json"));
}

#[test]
fn optimize_free_field_scene() {
    let o = closemic(&[
        "optimize",
        "--scene",
        &config("scene_free_field.json"),
        "--dist-min",
        "0.03",
        "--dist-max-m",
        "0.15",
        "--angle-min-deg",
        "0",
        "--angle-max",
        "45",
        "--grid",
        "5x4",
        "--tol",
        "0.01",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["best_angle_deg"], 45.0);
    assert_eq!(v["coarse_evaluations"], 20);
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len() as u64, v["evaluations"].as_u64().unwrap());
    let d = v["best_distance_m"].as_f64().unwrap();
    assert!((0.03..=0.15).contains(&d));
}

#[test]
fn optimize_rejects_degenerate_bounds() {
    let o = closemic(&[
        "optimize",
        "--scene",
        &config("scene_free_field.json"),
        "--dist-min-m",
        "0.2",
        "--dist-max-m",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let grid = closemic(&[
        "optimize",
        "--scene",
        &config("scene_free_field.json"),
        "--grid",
        "10by4",
    ]);
    assert_eq!(grid.status.code(), Some(2));
}

#[test]
fn bundled_config_matches_the_defaults() {
    let loaded = CampaignConfig::load(&configs().join("campaign_default.json")).unwrap();
    assert_eq!(loaded, CampaignConfig::default());
}

#[test]
fn fast_campaign_with_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let o = closemic(&["campaign", "--out", out.to_str().unwrap(), "--fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 511);
    assert_eq!(
        csv.lines().next().unwrap(),
        "mic,angle_deg,distance_m,source_spl_db,noise_spl_db,sir_db,mask_density"
    );
    let progress = stderr(&o).lines().filter(|l| l.starts_with('[')).count();
    assert_eq!(progress, 510);
    let grid = closemic::campaign::SirGrid::from_json_file(&out.join("grid.json")).unwrap();
    assert_eq!(grid.rows.len(), 510);
    assert_eq!(grid.to_csv(), csv);
}

#[test]
fn campaign_dumps_wavs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(
        &cfg,
        r#"{"distances_m": [0.06], "angled_distances_m": [0.06], "source_spls_db": [100], "noise_spls_db": [100, 94], "mics": ["cardioid"], "angles_deg": [0, 45]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = closemic(&[
        "campaign",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--fast",
        "--dump-wav",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(out.join("wav")).unwrap().count(), 2 * 4);
    assert!(out.join("wav/R1_cardioid_0deg_d01_s1_n2.wav").exists());
    assert!(out.join("wav/R4_cardioid_45deg_d01_s1_n1.wav").exists());
    assert_eq!(
        std::fs::read_to_string(out.join("grid.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn bad_campaign_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"distances": [0.1]}"#).unwrap();
    let out = dir.path().join("out");
    let o = closemic(&[
        "campaign",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("distances"));
    assert!(!out.exists());

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"distances_m": [0.3, 0.1]}"#).unwrap();
    let o = closemic(&[
        "campaign",
        "--config",
        invalid.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}
