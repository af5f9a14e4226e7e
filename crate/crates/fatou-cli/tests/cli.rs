//! End-to-end tests of the `fatou` binary: artifact layout, reproducibility,
//! integrity failures, and the machine-readable error contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fatou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fatou"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn error_json(output: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not JSON: {stderr}"))
}

const QUAD_CONFIG: &str = r#"{
  "sequence": { "kind": "autonomous", "reference": { "preset": "quadratic_shear" }, "horizon": 10 },
  "solver": { "samples": 64 },
  "diagnostics": {
    "grid_points": 8,
    "n_range": [1, 10],
    "surjectivity_radii": [1.0],
    "surjectivity_samples": 64,
    "slice": { "px": 8, "max_iter": 30 }
  }
}"#;

const SOLVE_FILES: &[&str] = &[
    "sequence.json",
    "conjugacy.json",
    "normalization.json",
    "boundedness.csv",
    "residuals.csv",
    "manifest.json",
];

#[test]
fn solve_writes_verifiable_artifacts_and_reruns_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "exp.json", QUAD_CONFIG);
    let (out_a, out_b) = (tmp.path().join("a"), tmp.path().join("b"));

    for out in [&out_a, &out_b] {
        let run = fatou(&[
            "solve",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            run.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    for name in SOLVE_FILES {
        let a = fs::read(out_a.join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let check = fatou(&["check", "--suite", "growth", "--artifacts", out_a.to_str().unwrap()]);
    assert!(
        check.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&check.stderr)
    );
    let stdout = String::from_utf8_lossy(&check.stdout);
    assert!(stdout.contains("\"integrity\""), "report: {stdout}");
}

#[test]
fn diagnose_writes_reports_and_rejects_a_stale_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "exp.json", QUAD_CONFIG);
    let art = tmp.path().join("art");
    let solve = fatou(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        art.to_str().unwrap(),
    ]);
    assert!(solve.status.success());

    let diag = fatou(&[
        "diagnose",
        "--config",
        config.to_str().unwrap(),
        "--artifacts",
        art.to_str().unwrap(),
    ]);
    assert!(
        diag.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&diag.stderr)
    );
    for name in ["convergence.csv", "surjectivity.json", "slice.ppm"] {
        assert!(art.join(name).exists(), "{name} missing");
    }
    let ppm = fs::read(art.join("slice.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n"));
    let csv = fs::read_to_string(art.join("convergence.csv")).unwrap();
    assert!(csv.contains("# ratio_ok,true"), "csv: {csv}");

    let stale = write_config(tmp.path(), "other.json", &QUAD_CONFIG.replace("\"horizon\": 10", "\"horizon\": 11"));
    let rerun = fatou(&[
        "diagnose",
        "--config",
        stale.to_str().unwrap(),
        "--artifacts",
        art.to_str().unwrap(),
    ]);
    assert_eq!(rerun.status.code(), Some(8));
    let err = error_json(&rerun);
    assert_eq!(err["error"]["code"], "stale-artifact");
    assert_eq!(err["exit"], 8);
}

#[test]
fn corrupted_artifacts_fail_integrity_with_exit_8() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "exp.json", QUAD_CONFIG);
    let art = tmp.path().join("art");
    assert!(fatou(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        art.to_str().unwrap(),
    ])
    .status
    .success());

    let target = art.join("conjugacy.json");
    let mut bytes = fs::read(&target).unwrap();
    bytes.push(b'\n');
    fs::write(&target, bytes).unwrap();

    let diag = fatou(&[
        "diagnose",
        "--config",
        config.to_str().unwrap(),
        "--artifacts",
        art.to_str().unwrap(),
    ]);
    assert_eq!(diag.status.code(), Some(8));
    assert_eq!(error_json(&diag)["error"]["code"], "corrupted-artifact");

    let check = fatou(&["check", "--suite", "growth", "--artifacts", art.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(8));
    let stdout = String::from_utf8_lossy(&check.stdout);
    assert!(stdout.contains("\"passed\": false"), "report: {stdout}");
}

#[test]
fn unknown_suite_and_malformed_configs_exit_2() {
    let unknown = fatou(&["check", "--suite", "bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    let err = error_json(&unknown);
    assert_eq!(err["error"]["code"], "invalid-config");
    assert_eq!(err["error"]["stage"], "config");

    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", r#"{ "nope": 1 }"#);
    let solve = fatou(&["solve", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(solve.status.code(), Some(2));
    assert_eq!(error_json(&solve)["error"]["code"], "config-parse");

    let missing = fatou(&["solve", "--config", tmp.path().join("gone.json").to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(7));
    assert_eq!(error_json(&missing)["error"]["stage"], "io");
}

#[test]
fn render_honors_the_window_and_validates_its_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "exp.json", QUAD_CONFIG);
    let art = tmp.path().join("art");
    assert!(fatou(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        art.to_str().unwrap(),
    ])
    .status
    .success());

    let render = fatou(&[
        "render",
        "--artifacts",
        art.to_str().unwrap(),
        "--window=-1.0,1.0,-0.5,0.5",
        "--px",
        "12",
    ]);
    assert!(
        render.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&render.stderr)
    );
    let ppm = fs::read(art.join("render.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n"));
    assert!(String::from_utf8_lossy(&ppm[..32]).contains("12 12"));

    let bad = fatou(&[
        "render",
        "--artifacts",
        art.to_str().unwrap(),
        "--window=1,2,3",
        "--px",
        "12",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(error_json(&bad)["error"]["code"], "invalid-config");
}
