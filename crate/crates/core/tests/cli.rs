use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example1.json")
}

fn isotorus(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isotorus")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = isotorus(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn equilibrium_level_two_has_three_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["equilibrium", "--ifs", example().to_str().unwrap(), "--n", "2", "--out", out]);
    let rows = csv_rows(&dir.path().join("frequencies.csv"));
    assert_eq!(rows.len(), 3);
    let omega: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(omega.windows(2).all(|w| w[0] < w[1]));
    let masses: f64 = csv_rows(&dir.path().join("masses.csv")).iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((masses - 1.0).abs() < 1e-12);
}

#[test]
fn hull_level_has_capacity_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["equilibrium", "--ifs", example().to_str().unwrap(), "--n", "0", "--out", out]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let cap = summary["capacity"].as_f64().unwrap();
    assert!((cap - 0.5).abs() < 1e-10, "{cap}");
    assert_eq!(csv_rows(&dir.path().join("frequencies.csv")).len(), 0);
}

#[test]
fn bands_and_gaps_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["bands", "--ifs", example().to_str().unwrap(), "--n", "3", "--out", out]);
    let bands = isotorus::io::read_bands(&dir.path().join("bands.csv"), 3).unwrap();
    assert_eq!(bands.num_bands(), 8);
    let gaps = csv_rows(&dir.path().join("gaps.csv"));
    assert_eq!(gaps.len(), 7);
    assert_eq!(gaps[0][1], "1");
    assert!(gaps[1..3].iter().all(|g| g[1] == "2"));
}

#[test]
fn torus_jacobi_smoke_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let start = Instant::now();
        run_ok(&["torus-jacobi", "--ifs", example().to_str().unwrap(), "--n", "4", "--J", "16", "--out", out.to_str().unwrap()]);
        (start.elapsed(), out)
    };
    let (elapsed, first) = run("a");
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");
    let (_, second) = run("b");
    for file in ["jacobi.csv", "error_profile.csv", "summary.json"] {
        assert_eq!(std::fs::read(first.join(file)).unwrap(), std::fs::read(second.join(file)).unwrap(), "{file}");
    }
    let jm = isotorus::io::read_jacobi(&first.join("jacobi.csv")).unwrap();
    assert_eq!(jm.len(), 16);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ex = example();
    let ex = ex.to_str().unwrap();
    for args in [
        vec!["bands", "--ifs", "/no/such/file.json", "--out", out],
        vec!["converge-infty", "--ifs", ex, "--n", "0", "--out", out],
        vec!["spectrum", "--ifs", ex, "--n", "0", "--out", out],
        vec!["spectrum", "--ifs", ex, "--eps", "-1", "--out", out],
        vec!["spectrum", "--ifs", ex, "--window-len", "100", "--out", out],
        vec!["torus-jacobi", "--ifs", ex, "--point", "nowhere", "--out", out],
        vec!["no-such-command", "--ifs", ex, "--out", out],
        vec!["spectrum", "--ifs", ex, "--n", "5", "--L", "9", "--out", out],
    ] {
        let status = isotorus(&args).status;
        assert_eq!(status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn overlapping_maps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ifs = dir.path().join("bad.json");
    std::fs::write(&ifs, r#"{"maps": [{"delta": 0.7, "gamma": -1.0}, {"delta": 0.7, "gamma": 1.0}]}"#).unwrap();
    let out = isotorus(&["bands", "--ifs", ifs.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlapping"));
}

#[test]
fn spectrum_files_at_level_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["spectrum", "--ifs", example().to_str().unwrap(), "--n", "1", "--J", "8001", "--L", "5", "--out", out]);
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(text.starts_with("k_1,omega_k,amplitude,phase\n"));
    assert_eq!(text.lines().count(), 1 + 6);
    let axes = csv_rows(&dir.path().join("axes.csv"));
    assert_eq!(axes.len(), 5);
    let amps: Vec<f64> = axes.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(amps.windows(2).all(|w| w[1] < w[0]), "{amps:?}");
}
