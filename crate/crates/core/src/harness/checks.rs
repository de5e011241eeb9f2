//! Empirical checks of the concentration, permanence and quality guarantees
//! against a finished run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::RunResult;
use crate::error::Result;
use crate::federation::{ClientState, FederationParams, Server};
use crate::objectives::{NoiseModel, ObjectiveSuite, OracleReport};
use crate::partition::{NodeId, Partition};
use crate::protocol::PhaseBroadcast;
use crate::scalar::Real;

/// A mixed estimate further than `B_p` from the true personalised value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GoodEventViolation<T> {
    pub phase: u32,
    pub client: usize,
    pub node: NodeId,
    pub estimate: T,
    pub truth: T,
    pub radius: T,
}

pub fn good_event_violations<T: Real>(
    result: &RunResult<T>,
    suite: &ObjectiveSuite<T>,
    partition: &Partition<T>,
) -> Result<Vec<GoodEventViolation<T>>> {
    let alpha = T::of(result.config.alpha);
    let mut out = Vec::new();
    for d in &result.decisions {
        for e in &d.estimates {
            let truth = suite.personalised(alpha, d.client, &partition.midpoint(e.node)?);
            if (e.mixed - truth).abs() > d.radius {
                out.push(GoodEventViolation {
                    phase: d.phase,
                    client: d.client,
                    node: e.node,
                    estimate: e.mixed,
                    truth,
                    radius: d.radius,
                });
            }
        }
    }
    Ok(out)
}

/// The cell holding a client's optimum was eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimalNodeElimination<T> {
    pub phase: u32,
    pub client: usize,
    pub node: NodeId,
    pub argmax: T,
}

pub fn optimal_node_eliminations<T: Real>(
    result: &RunResult<T>,
    oracle: &OracleReport<T>,
    partition: &Partition<T>,
) -> Result<Vec<OptimalNodeElimination<T>>> {
    let mut out = Vec::new();
    for d in &result.decisions {
        let best = oracle.personalised[d.client];
        let node = partition.locate(&best.point(partition.dim()), d.depth)?;
        if d.eliminated.contains(&node) {
            out.push(OptimalNodeElimination { phase: d.phase, client: d.client, node, argmax: best.argmax });
        }
    }
    Ok(out)
}

/// Suboptimality inside a surviving cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SurvivorQuality<T> {
    pub phase: u32,
    pub client: usize,
    pub node: NodeId,
    /// Largest gap to the optimum over the scanned points.
    pub worst_gap: T,
    /// Gap of the best scanned point.
    pub best_gap: T,
    /// `12 nu1 rho^h`.
    pub bound: T,
}

impl<T: Real> SurvivorQuality<T> {
    /// Every scanned point is within the bound.
    pub fn holds(&self) -> bool {
        self.worst_gap <= self.bound
    }
}

/// Scans every survivor cell on `points` evenly spaced points, endpoints included.
pub fn survivor_quality<T: Real>(
    result: &RunResult<T>,
    suite: &ObjectiveSuite<T>,
    oracle: &OracleReport<T>,
    partition: &Partition<T>,
    points: usize,
) -> Result<Vec<SurvivorQuality<T>>> {
    let alpha = T::of(result.config.alpha);
    let points = points.max(2);
    let mut out = Vec::new();
    for d in &result.decisions {
        let target = oracle.personalised[d.client].value;
        let bound = T::of(12.0) * partition.diameter_bound(d.depth);
        for &node in &d.survivors {
            let cell = partition.cell(node)?;
            let (lo, hi) = cell.bounds()[0];
            let mut x = cell.midpoint();
            let (mut best, mut worst) = (T::neg_infinity(), T::infinity());
            for k in 0..points {
                x[0] = lo + (hi - lo) * T::of_usize(k) / T::of_usize(points - 1);
                let v = suite.personalised(alpha, d.client, &x);
                best = best.max(v);
                worst = worst.min(v);
            }
            out.push(SurvivorQuality {
                phase: d.phase,
                client: d.client,
                node,
                worst_gap: target - worst,
                best_gap: target - best,
                bound,
            });
        }
    }
    Ok(out)
}

/// Monte Carlo spread of one phase's mixed estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorVariance {
    pub trials: usize,
    pub budget: f64,
    /// `1 / (4 M f)`.
    pub bound: f64,
    /// Largest empirical variance over `(client, node)` pairs.
    pub max_variance: f64,
    pub mean_variance: f64,
}

/// Replays the first phase `trials` times with fresh noise through a real
/// server and real clients and measures the variance of every mixed estimate.
pub fn estimator_variance<T: Real>(
    params: FederationParams<T>,
    suite: &ObjectiveSuite<T>,
    partition: &Partition<T>,
    noise: NoiseModel<T>,
    trials: usize,
    seed: u64,
) -> Result<EstimatorVariance> {
    let samples = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            one_phase(params, suite, partition, noise, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let budget = phase_one_budget(params);
    let width = samples[0].len();
    let n = trials as f64;
    let variances: Vec<f64> = (0..width)
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    Ok(EstimatorVariance {
        trials,
        budget,
        bound: 1.0 / (4.0 * params.clients as f64 * budget),
        max_variance: variances.iter().copied().fold(0.0, f64::max),
        mean_variance: variances.iter().sum::<f64>() / width as f64,
    })
}

fn phase_one_budget<T: Real>(p: FederationParams<T>) -> f64 {
    crate::federation::phase_budget(p.horizon, p.clients, p.nu1, p.rho, 1).as_f64()
}

fn one_phase<T: Real>(
    params: FederationParams<T>,
    suite: &ObjectiveSuite<T>,
    partition: &Partition<T>,
    noise: NoiseModel<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut clients = (0..params.clients).map(|m| ClientState::new(m, params)).collect::<Result<Vec<_>>>()?;
    let mut server = Server::new(params)?;
    let uploads = clients.iter().map(|c| c.active_set_upload()).collect::<Result<Vec<_>>>()?;
    let broadcast: PhaseBroadcast<T> = server.begin_phase(&uploads)?;
    for c in &mut clients {
        c.plan_schedule(&broadcast)?;
        let m = c.id();
        while c.block_remaining() > 0 {
            let node = c.next_action().expect("exploring");
            let mean = suite.local(m, &partition.midpoint(node)?);
            c.record_pull(node, mean + noise.sample(rng))?;
        }
    }
    let estimates = clients.iter().map(|c| c.local_estimates()).collect::<Result<Vec<_>>>()?;
    let global = server.aggregate(&estimates)?;
    let mut out = Vec::new();
    for c in &mut clients {
        let d = c.receive_global(&global)?;
        out.extend(d.estimates.iter().map(|e| e.mixed.as_f64()));
    }
    Ok(out)
}

/// Sample-count lower bound and `B_p = nu1 rho^h` for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseIdentity {
    pub phase: u32,
    pub radius_error: f64,
    /// `ceil(M alpha f) + M ceil((1-alpha) f)`.
    pub samples: u64,
    /// `M f`.
    pub required: f64,
}

impl PhaseIdentity {
    pub fn holds(&self, tol: f64) -> bool {
        self.radius_error <= tol && self.samples as f64 >= self.required
    }
}

pub fn phase_identities<T: Real>(result: &RunResult<T>) -> Result<Vec<PhaseIdentity>> {
    let partition = result.config.partition::<f64>()?;
    let m = result.config.clients as u64;
    Ok(result
        .phases
        .iter()
        .map(|p| PhaseIdentity {
            phase: p.phase,
            radius_error: (p.radius.as_f64() - partition.diameter_bound(p.depth)).abs(),
            samples: p.local_pulls + m * p.global_pulls,
            required: m as f64 * p.budget.as_f64(),
        })
        .collect())
}

/// Ledger totals recomputed from set sizes alone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedTraffic {
    pub uploaded_scalars: u64,
    pub downloaded_scalars: u64,
    pub round_trips: u32,
}

/// Per phase: `sum |A_m| + 2 sum |estimates_m|` up, `M (|A| + 1) + 2 M |A|` down.
pub fn expected_traffic<T: Real>(result: &RunResult<T>) -> ExpectedTraffic {
    let m = result.config.clients as u64;
    let mut out = ExpectedTraffic::default();
    for p in &result.phases {
        let union = p.union_size as u64;
        out.uploaded_scalars += p.own_sizes.iter().map(|&s| s as u64).sum::<u64>();
        out.downloaded_scalars += m * (union + 1);
        out.round_trips += 1;
        if !p.completed {
            continue;
        }
        let reported: u64 = p
            .own_sizes
            .iter()
            .map(|&s| if p.global_pulls > 0 { union } else { s as u64 })
            .sum();
        out.uploaded_scalars += 2 * reported;
        out.downloaded_scalars += 2 * m * union;
        out.round_trips += 1;
    }
    out
}
