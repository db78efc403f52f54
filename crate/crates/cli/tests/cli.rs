use std::path::Path;
use std::process::{Command, Output};

fn wavebc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavebc")).args(args).current_dir(cwd).env("WAVEBC_THREADS", "1").output().unwrap()
}

const LINE: &str = r#"
kind = "response"
horizon = 1.2
basis = { stride = 2 }

[grid]
dim = 1
extent = [1.0]
nodes = [41]
speed = { kind = "constant", c = 1.0 }
"#;

#[test]
fn scatter_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["scatter", "--profile", "cylindrical", "--kgrid", "0.5:2.0:5", "--lambdas", "0,1", "--out", "s.csv"];
    let out = wavebc(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.path().join("s.csv")).unwrap();
    assert!(first.starts_with(b"k,row,col,re,im\n"));
    wavebc(&args, dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("s.csv")).unwrap());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn validate_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavebc(&["validate", "--out-dir", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("v/manifest.json")).unwrap()).unwrap();
    assert!(manifest["suites"].as_array().unwrap().iter().all(|s| s["passed"] == true));
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{LINE}\n[tolerances]\neps_rel = -1e-3\n");
    std::fs::write(dir.path().join("bad.toml"), cfg).unwrap();
    std::fs::create_dir(dir.path().join("out")).unwrap();
    let out = wavebc(&["response", "--config", "bad.toml", "--out", "out/r.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path().join("out")).unwrap().count(), 0);

    let out = wavebc(&["reconstruct", "--response", "missing.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = wavebc(&["scatter", "--profile", "cusp", "--kgrid", "1:2", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn response_then_jtn_and_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("line.toml"), LINE).unwrap();
    let out = wavebc(&["response", "--config", "line.toml", "--out", "r.bin"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("r.bin").exists());

    std::fs::write(
        dir.path().join("slices.toml"),
        "sources = [0, 1]\n[[slices]]\npatch = [0]\nt_minus = 0.0\nt_plus = 0.6\n",
    )
    .unwrap();
    let out = wavebc(&["jtn", "--response", "r.bin", "--spec", "slices.toml", "--out-dir", "j"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("j/jtn.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\npositivity,"));

    std::fs::write(dir.path().join("search.toml"), "dr = 0.1\nl_max = 2\nsample_stride = 1\npatch_radius = 0\n").unwrap();
    let out = wavebc(&["reconstruct", "--response", "r.bin", "--search", "search.toml", "--out-dir", "rec"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = std::fs::read_to_string(dir.path().join("rec/representation.csv")).unwrap();
    assert!(rep.starts_with("id,z0,z1\n"));
    assert!(rep.lines().count() > 5);
}
