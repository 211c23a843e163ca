use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn psmtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psmtr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic dataset plus a run config sized for it.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let synth = dir.join("synth.toml");
    fs::write(
        &synth,
        "persons = 3\ntargets = 1\nimages = 16\nshape = [16, 12]\nfixations_per_map = 300\n",
    )
    .unwrap();
    let data = dir.join("data");
    let out = psmtr(&[
        "synth",
        "--out",
        arg(&data),
        "--config",
        arg(&synth),
        "--seed",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let config = dir.join("run.toml");
    fs::write(
        &config,
        "common_images = 4\n\n[regression]\nrank = 2\nlambda = 1.0\nworking_shape = [8, 6]\nmax_sweeps = 20\ncenter_targets = true\n",
    )
    .unwrap();
    (data.join("manifest.json"), config)
}

#[test]
fn ingest_check_summarizes() {
    let dir = TempDir::new().unwrap();
    let (manifest, _) = fixture(dir.path());
    let out = psmtr(&["ingest-check", "--manifest", arg(&manifest)]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["images"], 16);
    assert_eq!(summary["target_persons"], serde_json::json!(["t00"]));
}

#[test]
fn step_by_step_matches_single_run() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = fixture(dir.path());
    let steps = dir.path().join("steps");
    for cmd in ["select", "fit", "predict", "evaluate"] {
        let out = psmtr(&[
            cmd,
            "--manifest",
            arg(&manifest),
            "--config",
            arg(&config),
            "--out",
            arg(&steps),
        ]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let whole = dir.path().join("whole");
    let out = psmtr(&[
        "run",
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&config),
        "--out",
        arg(&whole),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["report.csv", "selection.json"] {
        assert_eq!(
            fs::read(steps.join(f)).unwrap(),
            fs::read(whole.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(whole.join("predictions/proposed/t00").is_dir());
}

#[test]
fn fit_without_selection_fails_validation() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = fixture(dir.path());
    let out_dir = dir.path().join("out");
    let out = psmtr(&[
        "fit",
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&config),
        "--out",
        arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("selection.json"));
    assert!(out_dir.join("FAILED").exists());
}

#[test]
fn changed_split_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = fixture(dir.path());
    let out_dir = dir.path().join("out");
    let base = [
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&config),
        "--out",
        arg(&out_dir),
    ];
    assert!(psmtr(&[&["select"], &base[..]].concat()).status.success());
    let out = psmtr(&[&["fit"], &base[..], &["--seed", "5"]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
}

#[test]
fn sweep_writes_grid_rows() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = fixture(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = psmtr(&[
        "sweep",
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&config),
        "--out",
        arg(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = fixture(dir.path());
    let out_dir = dir.path().join("out");
    let missing = psmtr(&[
        "ingest-check",
        "--manifest",
        arg(&dir.path().join("absent.json")),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "common_images = 4\nunknown_key = 1\n").unwrap();
    let out = psmtr(&[
        "run",
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&bad),
        "--out",
        arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));

    let out = psmtr(&[
        "run",
        "--manifest",
        arg(&manifest),
        "--config",
        arg(&config),
        "--out",
        arg(&out_dir),
        "--common-images",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out_dir.join("FAILED").exists());

    let out = psmtr(&[
        "fit",
        "--manifest",
        arg(&manifest),
        "--out",
        arg(&out_dir),
        "--target",
        "nobody",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn standard_grid_flag_is_accepted() {
    let out = psmtr(&["sweep", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    assert!(help.contains("--standard-grid"));
    let parsed = psmtr(&["sweep", "--manifest", "/nonexistent.json", "--paper-grid"]);
    assert_eq!(parsed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&parsed.stderr).contains("nonexistent"));
}
