//! CSV and JSON outputs with a fixed column order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::replicate::{AlphaSweepTable, ReplicationSummary};
use super::run::RunResult;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::objectives::OracleReport;
use crate::protocol::Transcript;
use crate::scalar::Real;

/// Run metadata written next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub precision: String,
    pub config: SimConfig,
    pub seeds: Vec<u64>,
    pub stop_depth: u32,
    pub phases: usize,
    pub truncated: bool,
    pub uploaded_scalars: u64,
    pub downloaded_scalars: u64,
    pub round_trips: u32,
}

impl RunMetadata {
    pub fn for_run<T: Real>(result: &RunResult<T>) -> Self {
        RunMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            precision: std::any::type_name::<T>().to_string(),
            config: result.config.clone(),
            seeds: vec![result.config.seed],
            stop_depth: result.stop_depth,
            phases: result.phases.len(),
            truncated: result.truncated,
            uploaded_scalars: result.ledger.uploaded_scalars,
            downloaded_scalars: result.ledger.downloaded_scalars,
            round_trips: result.ledger.round_trips,
        }
    }

    /// Ledger totals are summed over the replicates.
    pub fn for_replication<T: Real>(config: &SimConfig, summary: &ReplicationSummary<T>) -> Self {
        let runs = &summary.runs;
        RunMetadata {
            seeds: summary.seeds.clone(),
            stop_depth: runs[0].stop_depth,
            phases: runs.iter().map(|r| r.phases.len()).max().unwrap_or(0),
            truncated: runs.iter().any(|r| r.truncated),
            uploaded_scalars: runs.iter().map(|r| r.ledger.uploaded_scalars).sum(),
            downloaded_scalars: runs.iter().map(|r| r.ledger.downloaded_scalars).sum(),
            round_trips: runs.iter().map(|r| r.ledger.round_trips).sum(),
            config: config.clone(),
            ..RunMetadata::for_run(&runs[0])
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn join<T: Real>(xs: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (k, x) in xs.into_iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        write!(s, "{x}").expect("writing to a String");
    }
    s
}

/// `t,regret,client_0,...` with one row per checkpoint.
pub fn write_run_csv<T: Real>(path: &Path, result: &RunResult<T>) -> Result<()> {
    let mut out = String::from("t,regret");
    for m in 0..result.config.clients {
        write!(out, ",client_{m}").expect("writing to a String");
    }
    out.push('\n');
    for c in &result.checkpoints {
        writeln!(out, "{},{},{}", c.t, c.total, join(c.per_client.iter().copied())).expect("writing to a String");
    }
    write(path, &out)
}

/// `t,regret_mean,regret_std,regret_min,regret_max`.
pub fn write_replicate_csv<T: Real>(path: &Path, summary: &ReplicationSummary<T>) -> Result<()> {
    let mut out = String::from("t,regret_mean,regret_std,regret_min,regret_max\n");
    for k in 0..summary.t.len() {
        writeln!(
            out,
            "{},{}",
            summary.t[k],
            join([summary.mean[k], summary.std[k], summary.min[k], summary.max[k]])
        )
        .expect("writing to a String");
    }
    write(path, &out)
}

/// `alpha,personalised_reward,local_reward,global_reward,best_local,best_global`.
pub fn write_sweep_csv<T: Real>(path: &Path, table: &AlphaSweepTable<T>) -> Result<()> {
    let mut out = String::from("alpha,personalised_reward,local_reward,global_reward,best_local,best_global\n");
    for r in &table.rows {
        let row = [r.alpha, r.personalised_reward, r.local_reward, r.global_reward, r.best_local, r.best_global];
        writeln!(out, "{}", join(row)).expect("writing to a String");
    }
    write(path, &out)
}

pub fn write_run_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    write(path, &text)
}

/// One JSON object per phase.
pub fn write_phase_log<T: Real>(path: &Path, result: &RunResult<T>) -> Result<()> {
    let mut out = String::new();
    for p in &result.phases {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    write(path, &out)
}

pub fn write_transcript(path: &Path, transcript: &Transcript) -> Result<()> {
    write(path, &transcript.render())
}

pub fn write_oracle<T: Real>(path: &Path, report: &OracleReport<T>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write(path, &text)
}

pub fn read_oracle<T: Real>(path: &Path) -> Result<OracleReport<T>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::OracleMissing { path: path.to_path_buf() },
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{replicate, run, sweep_alpha};

    fn small() -> SimConfig {
        SimConfig { horizon: 100_000, clients: 2, oracle_resolution: 10_000, ..Default::default() }
    }

    #[test]
    fn run_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let r = run::<f64>(&small()).unwrap();
        let path = dir.path().join("run.csv");
        write_run_csv(&path, &r).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,regret,client_0,client_1");
        assert_eq!(lines.len(), 101);
        assert!(lines[100].starts_with("100000,"));
    }

    #[test]
    fn metadata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = run::<f64>(&SimConfig { horizon: 5_000, ..small() }).unwrap();
        let meta = RunMetadata::for_run(&r);
        let path = dir.path().join("nested/meta.json");
        write_run_metadata(&path, &meta).unwrap();
        let back: RunMetadata = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, meta);
        assert_eq!(back.config, r.config);
    }

    #[test]
    fn sweep_and_replicate_csv_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let c = SimConfig { horizon: 3_000, checkpoint_stride: 1_000, ..small() };
        let t = sweep_alpha::<f64>(&c, &[0.0, 0.5, 1.0]).unwrap();
        write_sweep_csv(&dir.path().join("s.csv"), &t).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap().lines().count(), 4);
        let s = replicate::<f64>(&c, &[1, 2]).unwrap();
        write_replicate_csv(&dir.path().join("r.csv"), &s).unwrap();
        let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,regret_mean,regret_std,regret_min,regret_max");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_oracle(&blocker.join("o.json"), &small().oracle::<f64>().unwrap()).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
        let missing = read_oracle::<f64>(&dir.path().join("none.json")).unwrap_err();
        assert!(matches!(missing, Error::OracleMissing { .. }));
    }

    #[test]
    fn oracle_fixture_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let o = small().oracle::<f64>().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_oracle(&a, &o).unwrap();
        write_oracle(&b, &small().oracle::<f64>().unwrap()).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_oracle::<f64>(&a).unwrap(), o);
    }
}
