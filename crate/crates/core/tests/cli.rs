use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pfxab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfxab")).args(args).output().expect("spawn pfxab")
}

fn small<'a>(out: &'a str) -> Vec<&'a str> {
    vec!["--horizon", "20000", "--clients", "3", "--checkpoint-stride", "1000", "--oracle-resolution", "20000", "--output", out]
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_trace_metadata_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--transcript"];
    args.extend(small(path(dir.path())));
    let out = pfxab(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,regret,client_0,client_1,client_2");
    assert_eq!(lines.count(), 20);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["horizon"], 20000);
    assert_eq!(meta["precision"], "f64");
    assert!(dir.path().join("phases.jsonl").exists());
    let transcript = fs::read_to_string(dir.path().join("transcript.txt")).unwrap();
    for line in transcript.lines() {
        pfxab::protocol::validate_privacy::<f64>(line).unwrap();
    }
}

#[test]
fn run_is_byte_stable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut args = vec!["run", "--seed", "9"];
        args.extend(small(path(d.path())));
        assert!(pfxab(&args).status.success());
    }
    assert_eq!(fs::read(a.path().join("run.csv")).unwrap(), fs::read(b.path().join("run.csv")).unwrap());
}

#[test]
fn f32_precision_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--precision", "f32"];
    args.extend(small(path(dir.path())));
    assert!(pfxab(&args).status.success());
    let meta = fs::read_to_string(dir.path().join("run.json")).unwrap();
    assert!(meta.contains("\"f32\""));
}

#[test]
fn replicate_summary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["replicate", "--seeds", "1,2,3"];
    args.extend(small(path(dir.path())));
    let out = pfxab(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("replicate.csv")).unwrap();
    assert!(csv.starts_with("t,regret_mean,regret_std,regret_min,regret_max\n"));
    assert_eq!(csv.lines().count(), 21);
    let meta = fs::read_to_string(dir.path().join("replicate.json")).unwrap();
    assert!(meta.contains("\"seeds\""));
}

#[test]
fn sweep_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--alphas", "0,0.5,1"];
    args.extend(small(path(dir.path())));
    let out = pfxab(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "alpha,personalised_reward,local_reward,global_reward,best_local,best_global");
    assert_eq!(lines.count(), 3);
}

#[test]
fn sweep_rejects_oracle_flag() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = dir.path().join("o.json");
    let mut args = vec!["sweep", "--oracle", path(&oracle)];
    args.extend(small(path(dir.path())));
    assert!(!pfxab(&args).status.success());
}

#[test]
fn oracle_fixture_round_trip_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = dir.path().join("oracle.json");
    let mut args = vec!["oracle", "--oracle", path(&oracle)];
    args.extend(small(path(dir.path())));
    assert!(pfxab(&args).status.success());
    let first = fs::read(&oracle).unwrap();
    assert!(pfxab(&args).status.success());
    assert_eq!(first, fs::read(&oracle).unwrap());

    let mut run = vec!["run", "--oracle", path(&oracle)];
    run.extend(small(path(dir.path())));
    assert!(pfxab(&run).status.success());

    let mut mismatched = vec!["run", "--oracle", path(&oracle), "--alpha", "0.25"];
    mismatched.extend(small(path(dir.path())));
    let out = pfxab(&mismatched);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle"));
}

#[test]
fn missing_oracle_fails_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let mut args = vec!["run", "--oracle", path(&missing)];
    args.extend(small(path(dir.path())));
    let out = pfxab(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "horizon = 5000\nclients = 2\nalpha = 0.9\ncheckpoint_stride = 500\noracle_resolution = 10000\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = pfxab(&["run", "--config", path(&cfg), "--alpha", "0.3", "--output", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["horizon"], 5000);
    assert_eq!(meta["config"]["clients"], 2);
    assert_eq!(meta["config"]["alpha"], 0.3);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "horizon = 100\nbogus = 1\n").unwrap();
    assert!(!pfxab(&["run", "--config", path(&cfg)]).status.success());
    let out = path(dir.path());
    assert!(!pfxab(&["run", "--alpha", "1.5", "--output", out]).status.success());
    assert!(!pfxab(&["run", "--objective", "sawtooth", "--output", out]).status.success());
    assert!(!pfxab(&["replicate", "--seeds", "4", "--output", out]).status.success());
}
