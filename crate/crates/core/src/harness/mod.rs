//! End-to-end simulation: configuration, the round clock, regret accounting
//! against the oracle, replication, alpha sweeps and output files.

mod checks;
mod emit;
mod replicate;
mod run;
mod trace;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{default_confidence_constant, stopping_depth, FederationParams};
use crate::objectives::{oracle_optima, BaseFunction, NoiseModel, ObjectiveSuite, OracleGrid, OracleReport};
use crate::partition::{default_constants, Partition, MAX_SUPPORTED_DEPTH};
use crate::scalar::Real;

pub use checks::{
    estimator_variance, expected_traffic, good_event_violations, optimal_node_eliminations, phase_identities,
    survivor_quality, EstimatorVariance, ExpectedTraffic, GoodEventViolation, OptimalNodeElimination, PhaseIdentity,
    SurvivorQuality,
};
pub use emit::{
    read_oracle, write_oracle, write_phase_log, write_replicate_csv, write_run_csv, write_run_metadata,
    write_sweep_csv, write_transcript, RunMetadata,
};
pub use replicate::{replicate, replicate_with_oracle, sweep_alpha, AlphaSweepRow, AlphaSweepTable, ReplicationSummary};
pub use run::{run, run_with_oracle, PhaseSummary, RewardAverages, RunResult};
pub use trace::{checkpoint_times, Checkpoint};

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Rounds `T`.
    pub horizon: u64,
    /// Clients `M`.
    pub clients: usize,
    pub alpha: f64,
    pub objective: BaseFunction,
    pub spread: f64,
    /// Half-width `b` of the uniform reward noise.
    pub noise: f64,
    pub dim: usize,
    /// Defaults to the partition's tightest constant for `dim`.
    pub nu1: Option<f64>,
    pub rho: Option<f64>,
    pub c: f64,
    /// Near-optimality dimension used for the stopping depth; 0 when unset.
    pub d_prime: Option<f64>,
    /// Overrides the stopping depth computed from `d_prime`.
    pub depth: Option<u32>,
    pub seed: u64,
    pub checkpoint_stride: u64,
    pub oracle_resolution: usize,
    pub output: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100_000,
            clients: 10,
            alpha: 0.5,
            objective: BaseFunction::Garland,
            spread: 0.2,
            noise: 0.1,
            dim: 1,
            nu1: None,
            rho: None,
            c: default_confidence_constant(),
            d_prime: None,
            depth: None,
            seed: 0,
            checkpoint_stride: 1_000,
            oracle_resolution: 1_000_000,
            output: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.clients < 1 {
            return bad("at least one client required".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise half-width must be >= 0, got {}", self.noise));
        }
        if self.dim < 1 {
            return bad("dimension must be positive".into());
        }
        if !(self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if self.d_prime.is_some_and(|d| !(d >= 0.0)) {
            return bad("d_prime must be non-negative".into());
        }
        if self.depth.is_some_and(|h| h < 1 || h >= MAX_SUPPORTED_DEPTH) {
            return bad(format!("depth override must lie in [1, {MAX_SUPPORTED_DEPTH})"));
        }
        if self.checkpoint_stride < 1 {
            return bad("checkpoint stride must be at least 1".into());
        }
        if self.oracle_resolution < OracleGrid::MIN_RESOLUTION {
            return bad(format!("oracle resolution must be at least {}", OracleGrid::MIN_RESOLUTION));
        }
        let (nu1, rho) = self.constants()?;
        if !(nu1 > 0.0) {
            return bad(format!("nu1 must be positive, got {nu1}"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return bad(format!("rho must lie in (0,1), got {rho}"));
        }
        Ok(())
    }

    /// `(nu1, rho)` after applying defaults.
    pub fn constants(&self) -> Result<(f64, f64)> {
        let (nu1, rho) = default_constants::<f64>(self.dim)?;
        Ok((self.nu1.unwrap_or(nu1), self.rho.unwrap_or(rho)))
    }

    pub fn stop_depth(&self) -> Result<u32> {
        if let Some(h) = self.depth {
            return Ok(h);
        }
        let (_, rho) = self.constants()?;
        Ok(stopping_depth(self.horizon, rho, self.d_prime.unwrap_or(0.0)).min(MAX_SUPPORTED_DEPTH - 1))
    }

    pub fn partition<T: Real>(&self) -> Result<Partition<T>> {
        let (nu1, rho) = self.constants()?;
        Partition::with_constants(self.dim, T::of(nu1), T::of(rho))
    }

    pub fn federation_params<T: Real>(&self) -> Result<FederationParams<T>> {
        self.validate()?;
        let (nu1, rho) = self.constants()?;
        let p = FederationParams {
            horizon: self.horizon,
            clients: self.clients,
            alpha: T::of(self.alpha),
            nu1: T::of(nu1),
            rho: T::of(rho),
            c: T::of(self.c),
            stop_depth: self.stop_depth()?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn suite<T: Real>(&self) -> Result<ObjectiveSuite<T>> {
        ObjectiveSuite::new(self.objective, self.clients, T::of(self.spread), self.dim)
    }

    pub fn noise_model<T: Real>(&self) -> Result<NoiseModel<T>> {
        NoiseModel::uniform(T::of(self.noise))
    }

    pub fn oracle_grid(&self) -> OracleGrid {
        OracleGrid::new(self.oracle_resolution)
    }

    /// Brute-force oracle for this configuration's suite and alpha.
    pub fn oracle<T: Real>(&self) -> Result<OracleReport<T>> {
        self.validate()?;
        oracle_optima(&self.suite()?, T::of(self.alpha), self.oracle_grid())
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        SimConfig { alpha, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig { seed, ..self.clone() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// Convenience for callers that only need the oracle step.
pub fn oracle<T: Real>(config: &SimConfig) -> Result<OracleReport<T>> {
    config.oracle()
}
