use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasespace::config::RunConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasespace"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin().args(args).arg("-c").arg(cfg).arg("-o").arg(out).output().unwrap()
}

fn report(out: &Path, cmd: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

#[test]
fn bundled_configs_load_and_round_trip() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{}", path.display());
    }
}

#[test]
fn stdout_matches_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["weyl", "--points", "256", "--length", "20"], &config("weyl.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read(dir.path().join("weyl.json")).unwrap();
    assert_eq!(out.stdout, written);
    let r = report(dir.path(), "weyl");
    let eig = r["eigenvalues"].as_array().unwrap();
    assert!((eig[0].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!(dir.path().join("eigenvalues.csv").exists());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["hermite-check", "-q", "--points", "128", "-c"])
        .arg(config("oscillator.toml"))
        .env("PHASESPACE_OUTPUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let r = report(dir.path(), "hermite-check");
    assert_eq!(r["within_tolerance"], true);
}

#[test]
fn exit_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("density-export"));

    let missing = run(&["solve"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[grid]\ndim = 1\npoints = 64\nlength = 10.0\nstride = 2\n").unwrap();
    let out = run(&["solve"], &bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));

    let no_table = run(&["weyl"], &config("concentration.toml"), dir.path());
    assert_eq!(no_table.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_table.stderr).contains("weyl"));

    let bh = run(&["bh-functional", "-q"], &config("concentration.toml"), dir.path());
    assert_eq!(bh.status.code(), Some(0));
}

#[test]
fn density_export_writes_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["density-export", "-q", "--points", "64"], &config("concentration.toml"), dir.path());
    assert!(out.status.success());
    let r = report(dir.path(), "density-export");
    assert!((r["mass_x"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["mass_k"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let density = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert_eq!(density.lines().count(), 1 + 64 * 64);
}

#[test]
fn seed_changes_random_placement() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["sums", "-q", "--seed", "1"], &config("double_well.toml"), &a).status.success());
    assert!(run(&["sums", "-q", "--seed", "2"], &config("double_well.toml"), &b).status.success());
    assert_ne!(report(&a, "sums")["cube_centers"], report(&b, "sums")["cube_centers"]);
}
