use std::path::Path;
use std::process::{Command, Output};

fn sgnls(args: &[&str]) -> Output {
    sgnls_with_env(args, &[])
}

fn sgnls_with_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgnls"));
    cmd.args(args).env_remove("SGNLS_CACHE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn sobolev_passes_with_csv_header() {
    let out = sgnls(&["sobolev", "--level", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "experiment,level,bc,k,s,q,j,index,T,dt,quantity,value,reference"
    );
    assert!(stderr(&out).contains("PASS saturation_q4"));
}

#[test]
fn invalid_parameters_exit_two() {
    for args in [
        &["sobolev", "--level", "3", "--q", "2"][..],
        &["sobolev", "--level", "3", "--bc", "periodic"],
        &["sobolev", "--level", "0"],
        &["illposed", "--level", "3", "--s", "2.5"],
        &["nls", "--level", "3", "--dt", "-1"],
        &["sobolev", "--level", "3", "--format", "xml"],
    ] {
        let out = sgnls(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(out.stdout.is_empty(), "{args:?} printed a report");
    }
}

#[test]
fn json_report_parses() {
    let out = sgnls(&["localized", "--level", "3", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["experiment"], "localized");
    assert_eq!(v["params"]["level"], 3);
    assert!(!v["rows"].as_array().unwrap().is_empty());
    assert_eq!(v["basis_fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn failed_verdicts_exit_one() {
    // Three levels are too few generations to resolve the growth rate.
    let out = sgnls(&["illposed", "--level", "3"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("FAIL slope_k1_s0.3"));
}

#[test]
fn cache_hits_on_second_run_with_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let run = |out: &Path| {
        sgnls(&[
            "spectrum",
            "--level",
            "3",
            "--cache",
            cache,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let a = run(&first);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(stderr(&a).contains("built and cached"));
    let b = run(&second);
    assert!(stderr(&b).contains("loaded from cache"), "{}", stderr(&b));
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
    // Uncached runs give the same report too.
    let c = sgnls(&["spectrum", "--level", "3"]);
    assert_eq!(c.stdout, std::fs::read(&first).unwrap());
}

#[test]
fn environment_overrides_cache_flag() {
    let dir = tempfile::tempdir().unwrap();
    let flag_dir = dir.path().join("flag");
    let env_dir = dir.path().join("env");
    let out = sgnls_with_env(
        &[
            "basis",
            "--level",
            "2",
            "--cache",
            flag_dir.to_str().unwrap(),
        ],
        &[("SGNLS_CACHE", &env_dir)],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(env_dir.join("basis-2-dirichlet.txt").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let one = sgnls(&["strichartz", "--level", "3", "--threads", "1"]);
    let two = sgnls(&["strichartz", "--level", "3", "--threads", "2"]);
    assert_eq!(one.stdout, two.stdout);
    assert!(!one.stdout.is_empty());
}
