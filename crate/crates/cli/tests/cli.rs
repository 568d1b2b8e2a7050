use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use volsplit_core::decomposition::read_artifacts;

fn volsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volsplit"))
        .args(args)
        .output()
        .expect("the binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

const FAST: &str = r#"{ "feeds_mm_min": [10498, 18896] }"#;
const NULL_MACHINE: &str = r#"{
    "feeds_mm_min": [5832, 18896],
    "servo": { "ideal": true },
    "structure": {},
    "thermal_drift_um": []
}"#;

/// Simulates `config` into `dir/campaign` and returns that directory.
fn simulate(dir: &Path, config: &str, extra: &[&str]) -> PathBuf {
    let cfg = write_config(dir, config);
    let out = dir.join("campaign");
    let mut args = vec!["simulate", "--config", arg(&cfg), "--out", arg(&out)];
    args.extend_from_slice(extra);
    let o = volsplit(&args);
    assert!(o.status.success(), "simulate failed: {}", text(&o.stderr));
    out
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn simulate_writes_streams_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), FAST, &[]);
    for id in ["F10498", "F18896"] {
        for f in ["controller.csv", "encoder.csv", "sensor.csv", "ground_truth.json", "ground_truth.csv"] {
            assert!(out.join("sessions").join(id).join(f).is_file(), "{id}/{f} missing");
        }
    }
    for f in ["manifest.json", "geometry.json", "calibration.json", "campaign.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let header = std::fs::read_to_string(out.join("sessions/F10498/encoder.csv")).unwrap();
    assert!(header.starts_with("t_s,X_mm,Y_mm,Z_mm,A_deg,C_deg"));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let runs: Vec<PathBuf> = (0..2)
        .map(|k| {
            let out = dir.path().join(format!("run{k}"));
            let o = volsplit(&["simulate", "--config", arg(&cfg), "--out", arg(&out), "--seed", "5", "--jobs", "2"]);
            assert!(o.status.success());
            let o = volsplit(&["decompose", arg(&out), "--out", arg(&out.join("artifacts"))]);
            assert!(o.status.success(), "{}", text(&o.stderr));
            out
        })
        .collect();
    let a = tree(&runs[0]);
    let b = tree(&runs[1]);
    assert!(a.len() > 10);
    assert!(a.iter().map(|(p, _)| p).eq(b.iter().map(|(p, _)| p)));
    for ((p, x), (_, y)) in a.iter().zip(&b) {
        assert!(x == y, "{} differs", p.display());
    }

    let other = dir.path().join("other");
    volsplit(&["simulate", "--config", arg(&cfg), "--out", arg(&other), "--seed", "6"]);
    let s5 = std::fs::read(runs[0].join("sessions/F10498/sensor.csv")).unwrap();
    let s6 = std::fs::read(other.join("sessions/F10498/sensor.csv")).unwrap();
    assert_ne!(s5, s6);
}

#[test]
fn null_machine_decomposes_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), NULL_MACHINE, &[]);
    let o = volsplit(&["decompose", arg(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("[F05832] delay 18.0 ms"), "{stdout}");
    for id in ["F05832", "F18896"] {
        let stored = read_artifacts(out.join("decomposition").join(id)).unwrap();
        for m in &stored.contributions {
            let worst = m.rows().iter().map(|r| r.amax()).fold(0.0, f64::max) * 1e3;
            assert!(worst <= 0.01, "{id}: {worst} µm");
        }
    }
}

#[test]
fn missing_encoder_names_session_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), FAST, &[]);
    std::fs::remove_file(out.join("sessions/F18896/encoder.csv")).unwrap();
    let o = volsplit(&["decompose", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let all = text(&o.stdout) + &text(&o.stderr);
    assert!(all.contains("F18896") && all.contains("encoder.csv"), "{all}");
    // The healthy reference session is still written.
    assert!(out.join("decomposition/F10498/summary.json").is_file());

    std::fs::remove_file(out.join("sessions/F10498/encoder.csv")).unwrap();
    let o = volsplit(&["decompose", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("F10498") && err.contains("encoder.csv"), "{err}");
}

#[test]
fn report_tables_and_single_session_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), FAST, &[]);
    let artifacts = out.join("decomposition");
    assert!(volsplit(&["decompose", arg(&out)]).status.success());

    let o = volsplit(&["report", arg(&artifacts)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    for f in ["report.json", "shares.csv", "dynamic_rms.csv", "power_law.csv", "dynamic_rms.svg"] {
        assert!(artifacts.join(f).is_file(), "{f} missing");
    }
    let shares = std::fs::read_to_string(artifacts.join("shares.csv")).unwrap();
    for line in shares.lines().skip(1) {
        let sum: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((sum - 100.0).abs() <= 0.1);
    }
    assert!(std::fs::read_to_string(artifacts.join("dynamic_rms.svg")).unwrap().starts_with("<svg"));

    let single = dir.path().join("single");
    std::fs::create_dir_all(&single).unwrap();
    std::fs::rename(artifacts.join("F10498"), single.join("F10498")).unwrap();
    let o = volsplit(&["report", arg(&single)]);
    assert!(o.status.success());
    assert!(text(&o.stderr).contains("power-law fit skipped"), "{}", text(&o.stderr));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(volsplit(&["report", arg(&empty)]).status.code(), Some(1));
}

#[test]
fn identify_on_null_machine_gives_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), NULL_MACHINE, &[]);
    let target = dir.path().join("identified");
    let o = volsplit(&["identify", arg(&out), "--out", arg(&target)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(target.join("link_errors.json")).unwrap()).unwrap();
    let params = json["parameters"].as_array().unwrap();
    assert_eq!(params.len(), 8);
    for p in params {
        assert!(p["value"].as_f64().unwrap().abs() < 1e-3, "{p}");
    }
}

#[test]
fn frozen_rotary_axes_are_rank_deficient() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "feeds_mm_min": [3000],
        "path": [[0, 0, 0, 0, 0], [60, 0, 0, 0, 0], [60, 40, 0, 0, 0], [0, 40, 25, 0, 0], [0, 0, 0, 0, 0]]
    }"#;
    let out = simulate(dir.path(), config, &[]);
    let o = volsplit(&["identify", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr).to_lowercase();
    assert!(err.contains("rank") || err.contains("condition"), "{err}");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "feeds_mm_min": [1000], "no_such_field": 1 }"#);
    let o = volsplit(&["simulate", "--config", arg(&cfg), "--out", arg(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{ "feeds_mm_min": [-5] }"#);
    let o = volsplit(&["simulate", "--config", arg(&cfg), "--out", arg(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = volsplit(&["decompose", arg(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = volsplit(&["decompose"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sync_check_reports_the_recording_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), FAST, &[]);
    let o = volsplit(&["sync-check", "--config", arg(&out.join("manifest.json"))]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("[F10498] delay 18.0 ms") && stdout.contains("[F18896] delay 18.0 ms"), "{stdout}");

    let o = volsplit(&["sync-check", arg(&out), "--delay-method", "xcorr"]);
    assert!(o.status.success());
}
