use std::fs;
use std::path::Path;
use std::process::Command;

fn hrl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hrl"));
    c.env_remove("HRL_OUTPUT_DIR");
    c
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn passing_run_writes_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrl().args(["tiling", "--J", "6", "--lambda", "1..3", "--output-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("tiling.json"));
    assert_eq!(json["subcommand"], "tiling");
    assert_eq!(json["pass"], true);
    assert_eq!(json["params"]["J"], 6);
    assert_eq!(json["params"]["lambda"], serde_json::json!([1, 3]));
    assert!(json["violations"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(dir.path().join("tiling-checks.csv")).unwrap();
    assert!(csv.starts_with("probe,pattern,lambda,modulus_error,residual,cubes\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 3);
}

#[test]
fn band_violation_exits_one() {
    // the exact-vanishing regimes cannot be fitted, so coeff-scan reports violations
    let dir = tempfile::tempdir().unwrap();
    let out = hrl().args(["coeff-scan", "--J", "10", "--output-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let json = read_json(&dir.path().join("coeff-scan.json"));
    assert_eq!(json["pass"], false);
    assert!(!json["violations"].as_array().unwrap().is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hrl().args(["bogus"]).output().unwrap().status.code(), Some(2));
    assert_eq!(hrl().args(["run", "bogus"]).output().unwrap().status.code(), Some(2));
    assert_eq!(hrl().args(["tiling", "--p", "0.5"]).output().unwrap().status.code(), Some(2));
    assert_eq!(hrl().args(["ring-decay", "--lambda", "4..2"]).output().unwrap().status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(hrl().args(["tiling", "--config"]).arg(&cfg).output().unwrap().status.code(), Some(2));
    let missing = dir.path().join("missing.cfg");
    assert_eq!(hrl().args(["tiling", "--config"]).arg(&missing).output().unwrap().status.code(), Some(2));
    assert_eq!(hrl().args(["coeff-scan", "--J", "8"]).output().unwrap().status.code(), Some(2));
    // λ must stay below J
    let out = hrl().args(["tiling", "--J", "4", "--lambda", "1..4", "--output-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_and_config_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_out = dir.path().join("from-config");
    let env_out = dir.path().join("from-env");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("# small run\nJ = 5\nseed = 3\noutput_dir = {}\n", cfg_out.display())).unwrap();
    let out = hrl()
        .env("HRL_OUTPUT_DIR", &env_out)
        .args(["kernel-check", "--seed", "11", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!env_out.exists());
    let json = read_json(&cfg_out.join("kernel-check.json"));
    assert_eq!(json["params"]["seed"], 11);

    let out = hrl().env("HRL_OUTPUT_DIR", &env_out).args(["kernel-check"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env_out.join("kernel-check.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["ring-equivalence", "layer-decay", "riesz-identity"] {
            let out = hrl()
                .args(["run", cmd, "--seed", "7", "--J", "6", "--lambda", "1..3", "--l-max", "3", "--threads", threads])
                .arg("--output-dir")
                .arg(dir.path())
                .output()
                .unwrap();
            assert!(out.status.code().is_some_and(|c| c <= 1), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.len(), sb.len());
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x.0, y.0);
        assert!(x.1 == y.1, "{} differs between runs", x.0);
    }
}
