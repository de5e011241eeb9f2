//! Seeded replication and alpha sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_with_oracle, RunResult};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::objectives::OracleReport;
use crate::scalar::Real;

/// Cross-seed statistics of cumulative regret at each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReplicationSummary<T> {
    pub seeds: Vec<u64>,
    pub t: Vec<u64>,
    pub mean: Vec<T>,
    /// Sample standard deviation.
    pub std: Vec<T>,
    pub min: Vec<T>,
    pub max: Vec<T>,
    pub runs: Vec<RunResult<T>>,
}

impl<T: Real> ReplicationSummary<T> {
    fn from_runs(seeds: Vec<u64>, runs: Vec<RunResult<T>>) -> Self {
        let t: Vec<u64> = runs[0].checkpoints.iter().map(|c| c.t).collect();
        let n = T::of_usize(runs.len());
        let mut mean = Vec::with_capacity(t.len());
        let mut std = Vec::with_capacity(t.len());
        let mut min = Vec::with_capacity(t.len());
        let mut max = Vec::with_capacity(t.len());
        for k in 0..t.len() {
            let xs: Vec<T> = runs.iter().map(|r| r.checkpoints[k].total).collect();
            let mu = xs.iter().copied().sum::<T>() / n;
            let ss = xs.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>();
            let lo = xs.iter().copied().fold(T::infinity(), T::min);
            let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
            mean.push(mu.max(lo).min(hi));
            std.push(if lo == hi { T::zero() } else { (ss / (n - T::one())).sqrt() });
            min.push(lo);
            max.push(hi);
        }
        ReplicationSummary { seeds, t, mean, std, min, max, runs }
    }

    /// Mean cumulative regret at checkpoint `t`.
    pub fn mean_at(&self, t: u64) -> Option<T> {
        self.t.iter().position(|&c| c == t).map(|k| self.mean[k])
    }
}

pub fn replicate<T: Real>(config: &SimConfig, seeds: &[u64]) -> Result<ReplicationSummary<T>> {
    let oracle = config.oracle::<T>()?;
    replicate_with_oracle(config, seeds, &oracle)
}

/// Runs one simulation per seed in parallel.
pub fn replicate_with_oracle<T: Real>(
    config: &SimConfig,
    seeds: &[u64],
    oracle: &OracleReport<T>,
) -> Result<ReplicationSummary<T>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig(format!("replication needs at least 2 seeds, got {}", seeds.len())));
    }
    config.validate()?;
    let runs = seeds
        .par_iter()
        .map(|&s| run_with_oracle(&config.with_seed(s), oracle, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationSummary::from_runs(seeds.to_vec(), runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AlphaSweepRow<T> {
    pub alpha: T,
    pub personalised_reward: T,
    pub local_reward: T,
    pub global_reward: T,
    pub best_local: T,
    pub best_global: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AlphaSweepTable<T> {
    pub rows: Vec<AlphaSweepRow<T>>,
}

/// One full run per alpha; reference lines come from each alpha's oracle.
pub fn sweep_alpha<T: Real>(config: &SimConfig, alphas: &[f64]) -> Result<AlphaSweepTable<T>> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0,1], got {a}")));
    }
    let rows = alphas
        .par_iter()
        .map(|&a| {
            let c = config.with_alpha(a);
            let oracle = c.oracle::<T>()?;
            let r = run_with_oracle(&c, &oracle, false)?;
            Ok(AlphaSweepRow {
                alpha: T::of(a),
                personalised_reward: r.rewards.personalised,
                local_reward: r.rewards.local,
                global_reward: r.rewards.global,
                best_local: oracle.best_local_mean(),
                best_global: oracle.global.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaSweepTable { rows })
}
