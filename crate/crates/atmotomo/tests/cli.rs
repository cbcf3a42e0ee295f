//! End-to-end tests of the command-line interface: exit codes, artifact
//! layout and rerun determinism.

use std::path::Path;
use std::process::Command;

use atmotomo::config::preset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_atmotomo"))
}

fn write_small_config(dir: &Path, out: &Path) -> std::path::PathBuf {
    let mut config = preset("ngs6").unwrap();
    config.grid.n = 32;
    config.seed = 3;
    config.output_dir = out.to_path_buf();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn pipeline_runs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let config = write_small_config(tmp.path(), &out_a);

    let status = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    for artifact in [
        "screens/layer_00.grid",
        "wavefronts/star_05.grid",
        "recon/layer_02.grid",
        "report.csv",
        "manifest.json",
    ] {
        assert!(out_a.join(artifact).exists(), "missing {artifact}");
    }

    let status = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    for artifact in [
        "screens/layer_01.grid",
        "wavefronts/star_00.grid",
        "recon/layer_00.grid",
        "report.csv",
    ] {
        let a = std::fs::read(out_a.join(artifact)).unwrap();
        let b = std::fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between reruns");
    }

    // A different seed changes the screens.
    let out_c = tmp.path().join("c");
    let status = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_c)
        .args(["--seed", "4"])
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read(out_a.join("screens/layer_00.grid")).unwrap();
    let c = std::fs::read(out_c.join("screens/layer_00.grid")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn staged_commands_produce_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("staged");
    let config = write_small_config(tmp.path(), &out);
    for command in ["simulate", "forward", "reconstruct", "evaluate"] {
        let status = bin()
            .args([command, "--config"])
            .arg(&config)
            .status()
            .unwrap();
        assert!(status.success(), "{command} failed");
    }
    assert!(out.join("report.csv").exists());

    let status = bin()
        .args(["export-plotdata", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("plotdata/error_vs_separation.csv").exists());
    assert!(out.join("plotdata/layer_errors.csv").exists());
}

#[test]
fn forward_without_screens_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let config = write_small_config(tmp.path(), &out);
    let output = bin()
        .args(["forward", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("missing artifact"), "stderr: {stderr}");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();

    // unknown key
    let mut value: serde_json::Value = serde_json::to_value(preset("ngs6").unwrap()).unwrap();
    value
        .as_object_mut()
        .unwrap()
        .insert("typo".into(), serde_json::json!(0));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&value).unwrap()).unwrap();
    let output = bin()
        .args(["pipeline", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // extension half-width too small: fails fast, naming the pairs
    let mut config = preset("ngs6").unwrap();
    config.grid.extension_half_width_m = 21.5;
    config.output_dir = tmp.path().join("never");
    let small = tmp.path().join("small.json");
    std::fs::write(&small, serde_json::to_string(&config).unwrap()).unwrap();
    let output = bin()
        .args(["pipeline", "--config"])
        .arg(&small)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("violating (layer, star) pairs"),
        "stderr: {stderr}"
    );
    assert!(!config.output_dir.exists(), "no artifacts on failure");

    // unknown preset
    let output = bin()
        .args(["pipeline", "--preset", "nope"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // missing config and preset
    let output = bin().arg("pipeline").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn sweep_and_diagnose_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let config = write_small_config(tmp.path(), &out);
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--param", "alpha", "--values", "1e-5,1e-3,1e-1"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);

    let status = bin()
        .args(["diagnose", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("diagnose.json").exists());
    assert!(out.join("picard.csv").exists());
}

#[test]
fn cache_dir_env_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cache = tmp.path().join("cachedir");
    let config = write_small_config(tmp.path(), &out);
    let status = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .env("ATMOTOMO_CACHE_DIR", &cache)
        .status()
        .unwrap();
    assert!(status.success());
    let entries: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1, "one cache file expected");
    assert!(!out.join("cache").exists());
}
