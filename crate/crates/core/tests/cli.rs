//! The `dirmix` binary: exit codes and byte-identical reruns.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dirmix");

const SMALL: &str = r#"{
  "seed": 4,
  "objective": {"kind": "quadratic", "n": 5, "sigma": 0.05},
  "points": {"count": 2, "concentration": 10.0},
  "moments": {"n": 5, "repetitions": 500},
  "estimate": {"sigma": [0.02, 0.05], "r": [3], "c": [0.05], "n": [4], "trials": 3},
  "optimize": {"method": "fwsa", "optimizer": {"schedule": {"max_iter": 6, "r0": 2.0}, "probes": 2}, "trials": 2},
  "bench": {
    "trials": 3,
    "axes": [{"axis": "sigma", "values": [0.01, 0.02, 0.04], "at": {"sigma": 0.05, "r": 4, "c": 0.05, "n": 4}, "expected_slope": 2.0, "tolerance": 0.3}],
    "compare_at": {"sigma": 0.05, "r": 4, "c": 0.05, "n": 4},
    "comparisons": [{"estimator": "sfe", "mixture": {"kind": "delta_star"}, "min_ratio": 10.0}]
  }
}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap()
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn every_command_reruns_byte_identically() {
    for (cmd, allowed) in [("verify-moments", &[0][..]), ("estimate", &[0]), ("optimize", &[0]), ("bench", &[0, 3])] {
        let dir = tempfile::tempdir().unwrap();
        let ra = run(dir.path(), SMALL, &[cmd, "--threads", "1"]);
        let fa = read_outputs(dir.path());
        std::fs::remove_dir_all(dir.path().join("out")).unwrap();
        let rb = run(dir.path(), SMALL, &[cmd, "--threads", "3"]);
        let fb = read_outputs(dir.path());
        assert!(allowed.contains(&code(&ra)), "{cmd}: {}", String::from_utf8_lossy(&ra.stderr));
        assert_eq!(code(&ra), code(&rb));
        assert!(fa.len() >= 2, "{cmd}: {:?}", fa.keys());
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (name, bytes) in &fa {
            assert!(bytes == &fb[name], "{cmd}: {name} differs between runs");
        }
        assert!(fa.contains_key("resolved_config.json"));
    }
}

#[test]
fn csv_outputs_have_headers_and_lf_endings() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), SMALL, &["estimate"])), 0);
    let text = std::fs::read_to_string(dir.path().join("out/estimate.csv")).unwrap();
    assert!(!text.contains('\r'));
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("seed,estimator,mixture,sigma,R,c,n,point,trial"), "{header}");
    // 2 sigmas x 2 points x 3 trials
    assert_eq!(text.lines().count(), 1 + 12);
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), SMALL, &["estimate"]);
    run(b.path(), SMALL, &["estimate", "--seed", "5"]);
    assert_ne!(read_outputs(a.path())["estimate.csv"], read_outputs(b.path())["estimate.csv"]);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        "{ not json",
        r#"{"sede": 1}"#,
        r#"{"estimate": {"c": [1.5]}}"#,
        r#"{"objective": {"kind": "mg1"}, "estimate": {"estimator": "cfe"}}"#,
        r#"{"optimize": {"optimizer": {"schedule": {"a": -1.0}}}}"#,
    ] {
        let out = run(dir.path(), bad, &["estimate"]);
        let out = if code(&out) == 0 { run(dir.path(), bad, &["optimize"]) } else { out };
        assert_eq!(code(&out), 1, "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = Command::new(BIN).args(["estimate", "--config", "/nonexistent/dirmix.json"]).output().unwrap();
    assert_eq!(code(&missing), 1);
}

#[test]
fn oracle_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"objective": {"kind": "custom", "n": 3, "command": "exit 7"},
                  "points": {"count": 1}, "estimate": {"n": [3], "r": [2], "trials": 2}}"#;
    let out = run(dir.path(), cfg, &["estimate"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn custom_subprocess_oracle_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"objective": {"kind": "custom", "n": 3, "command": "awk '{print ($1-0.2)^2 + $2}'"},
                  "points": {"count": 1}, "estimate": {"n": [3], "r": [2], "trials": 2}}"#;
    let out = run(dir.path(), cfg, &["estimate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
