//! The round clock: phases with barriers, then terminal exploitation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::{assemble, checkpoint_times, Checkpoint, RegretTrace};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::federation::{confidence_radius, ClientState, EliminationDecision, Mode, SampleCounts, Server};
use crate::objectives::{mix, NoiseModel, ObjectiveSuite, OracleReport};
use crate::partition::{NodeId, Partition};
use crate::protocol::{CommLedger, Message, Transcript};
use crate::scalar::Real;

/// Per-step averages of the true values at the played midpoints, over all
/// clients and rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RewardAverages<T> {
    pub personalised: T,
    pub local: T,
    pub global: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PhaseSummary<T> {
    pub phase: u32,
    pub depth: u32,
    /// Rounds played before the phase started.
    pub start: u64,
    /// Rounds the phase lasted, `L_p`.
    pub length: u64,
    pub budget: T,
    pub radius: T,
    pub global_pulls: u64,
    pub local_pulls: u64,
    pub union_size: usize,
    pub own_sizes: Vec<usize>,
    /// False when the horizon ran out before every schedule finished.
    pub completed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RunResult<T> {
    pub config: SimConfig,
    pub stop_depth: u32,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub rewards: RewardAverages<T>,
    pub phases: Vec<PhaseSummary<T>>,
    pub decisions: Vec<EliminationDecision<T>>,
    pub ledger: CommLedger,
    pub terminal: Vec<Option<NodeId>>,
    pub client_pulls: Vec<u64>,
    pub terminal_rounds: u64,
    /// Smallest per-round personalised regret incurred by any client.
    pub min_round_regret: T,
    pub truncated: bool,
    pub transcript: Option<Transcript>,
    pub wall_time_secs: f64,
}

/// Equality ignores wall time.
impl<T: PartialEq> PartialEq for RunResult<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.stop_depth == other.stop_depth
            && self.checkpoints == other.checkpoints
            && self.rewards == other.rewards
            && self.phases == other.phases
            && self.decisions == other.decisions
            && self.ledger == other.ledger
            && self.terminal == other.terminal
            && self.client_pulls == other.client_pulls
            && self.terminal_rounds == other.terminal_rounds
            && self.min_round_regret == other.min_round_regret
            && self.truncated == other.truncated
            && self.transcript == other.transcript
    }
}

impl<T: Real> RunResult<T> {
    /// Cumulative regret at the horizon.
    pub fn final_regret(&self) -> T {
        self.checkpoints.last().map_or(T::zero(), |c| c.total)
    }

    /// Cumulative regret at checkpoint `t`, if `t` is one.
    pub fn regret_at(&self, t: u64) -> Option<T> {
        self.checkpoints.iter().find(|c| c.t == t).map(|c| c.total)
    }

    pub fn completed_phases(&self) -> usize {
        self.phases.iter().filter(|p| p.completed).count()
    }

    /// Phase lengths plus terminal rounds.
    pub fn rounds_played(&self) -> u64 {
        self.phases.iter().map(|p| p.length).sum::<u64>() + self.terminal_rounds
    }
}

#[derive(Debug, Clone)]
struct NodeValues<T> {
    local: Vec<T>,
    personalised: Vec<T>,
    global: T,
}

fn node_values<T: Real>(suite: &ObjectiveSuite<T>, partition: &Partition<T>, alpha: T, node: NodeId) -> Result<NodeValues<T>> {
    let x = partition.midpoint(node)?;
    let local = suite.local_values(&x);
    let global = local.iter().copied().sum::<T>() / T::of_usize(local.len());
    let personalised = local.iter().map(|&l| mix(alpha, l, global)).collect();
    Ok(NodeValues { local, personalised, global })
}

struct Worker<T> {
    state: ClientState<T>,
    rng: ChaCha8Rng,
    trace: RegretTrace<T>,
    sums: [T; 3],
    min_regret: T,
    optimum: T,
}

impl<T: Real> Worker<T> {
    fn account(&mut self, start: u64, rounds: u64, v: &NodeValues<T>) {
        if rounds == 0 {
            return;
        }
        let m = self.state.id();
        let regret = self.optimum - v.personalised[m];
        self.trace.add(start, rounds, regret);
        let n = T::from_u64(rounds).expect("round count fits");
        self.sums[0] = self.sums[0] + v.personalised[m] * n;
        self.sums[1] = self.sums[1] + v.local[m] * n;
        self.sums[2] = self.sums[2] + v.global * n;
        self.min_regret = self.min_regret.min(regret);
    }

    /// Plays `rounds` rounds of the current phase starting after round `start`.
    fn play_phase(
        &mut self,
        start: u64,
        rounds: u64,
        cache: &BTreeMap<NodeId, NodeValues<T>>,
        noise: NoiseModel<T>,
    ) -> Result<()> {
        let m = self.state.id();
        let mut played = 0;
        while played < rounds {
            let node = self.state.next_action().ok_or(Error::InvalidMode {
                client: m,
                mode: "Eliminate",
                action: "playing a phase",
            })?;
            let v = &cache[&node];
            let n = match self.state.mode() {
                Mode::GlobalExplore | Mode::LocalExplore => {
                    let n = self.state.block_remaining().min(rounds - played);
                    for _ in 0..n {
                        let reward = v.local[m] + noise.sample(&mut self.rng);
                        self.state.record_pull(node, reward)?;
                    }
                    n
                }
                _ => {
                    let n = rounds - played;
                    self.state.record_exploit_rounds(n)?;
                    n
                }
            };
            let v = v.clone();
            self.account(start + played, n, &v);
            played += n;
        }
        Ok(())
    }
}

/// Runs one simulation, computing the oracle from the configuration.
pub fn run<T: Real>(config: &SimConfig) -> Result<RunResult<T>> {
    let oracle = config.oracle::<T>()?;
    run_with_oracle(config, &oracle, false)
}

/// Runs one simulation against a precomputed oracle.
pub fn run_with_oracle<T: Real>(
    config: &SimConfig,
    oracle: &OracleReport<T>,
    record_transcript: bool,
) -> Result<RunResult<T>> {
    let started = Instant::now();
    let params = config.federation_params::<T>()?;
    let suite = config.suite::<T>()?;
    let partition = config.partition::<T>()?;
    let noise = config.noise_model::<T>()?;
    let alpha = params.alpha;
    oracle.check_matches(&suite, alpha)?;

    let horizon = config.horizon;
    let clients = config.clients;
    let times = checkpoint_times(horizon, config.checkpoint_stride);

    let mut workers = (0..clients)
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(m as u64);
            Ok(Worker {
                state: ClientState::new(m, params)?,
                rng,
                trace: RegretTrace::new(&times, config.checkpoint_stride),
                sums: [T::zero(); 3],
                min_regret: T::infinity(),
                optimum: oracle.personalised[m].value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut server = Server::new(params)?;
    let mut ledger = CommLedger::new();
    let mut transcript = record_transcript.then(Transcript::default);
    let mut log = |ledger: &mut CommLedger, msg: Message<T>, recipients: usize| -> Result<()> {
        if msg.is_upload() {
            ledger.record_upload(&msg)?;
        } else {
            ledger.record_broadcast(&msg, recipients)?;
        }
        if let Some(tr) = transcript.as_mut() {
            tr.push(&msg);
        }
        Ok(())
    };

    let mut phases = Vec::new();
    let mut decisions = Vec::new();
    let mut t = 0u64;
    let mut truncated = false;

    while t < horizon {
        let phase = workers[0].state.phase();
        ledger.begin_phase(phase);
        let uploads = workers.iter().map(|w| w.state.active_set_upload()).collect::<Result<Vec<_>>>()?;
        for u in &uploads {
            log(&mut ledger, u.clone().into(), clients)?;
        }
        let broadcast = server.begin_phase(&uploads)?;
        log(&mut ledger, broadcast.clone().into(), clients)?;
        for w in &mut workers {
            w.state.plan_schedule(&broadcast)?;
        }

        let longest = workers.iter().map(|w| w.state.schedule_len()).max().unwrap_or(0);
        let length = longest.min(horizon - t);
        let cache = broadcast
            .active
            .iter()
            .map(|&n| Ok((n, node_values(&suite, &partition, alpha, n)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        workers.par_iter_mut().try_for_each(|w| w.play_phase(t, length, &cache, noise))?;

        let counts = SampleCounts::new(alpha, clients, broadcast.budget);
        phases.push(PhaseSummary {
            phase,
            depth: broadcast.depth,
            start: t,
            length,
            budget: broadcast.budget,
            radius: confidence_radius(horizon, clients, broadcast.budget, params.c),
            global_pulls: counts.global,
            local_pulls: counts.local,
            union_size: broadcast.active.len(),
            own_sizes: uploads.iter().map(|u| u.nodes.len()).collect(),
            completed: length == longest,
        });
        t += length;
        if length < longest {
            truncated = true;
            break;
        }

        let estimates = workers.iter().map(|w| w.state.local_estimates()).collect::<Result<Vec<_>>>()?;
        for e in &estimates {
            log(&mut ledger, e.clone().into(), clients)?;
        }
        let global = server.aggregate(&estimates)?;
        log(&mut ledger, global.clone().into(), clients)?;
        for w in &mut workers {
            decisions.push(w.state.receive_global(&global)?);
        }
        if workers.iter().all(|w| w.state.mode() == Mode::Terminal) {
            break;
        }
    }

    let terminal_rounds = horizon - t;
    if terminal_rounds > 0 {
        if workers.iter().any(|w| w.state.mode() != Mode::Terminal) {
            return Err(Error::InvalidConfig("horizon left over before the stopping depth".into()));
        }
        for w in &mut workers {
            let node = w.state.terminal().expect("terminal clients hold a node");
            let v = node_values(&suite, &partition, alpha, node)?;
            w.state.record_exploit_rounds(terminal_rounds)?;
            w.account(t, terminal_rounds, &v);
        }
    }
    if workers.iter().any(|w| w.state.mode() != Mode::Terminal) {
        truncated = true;
    }

    let denom = T::from_u64(horizon).expect("horizon fits") * T::of_usize(clients);
    let total = |k: usize| workers.iter().map(|w| w.sums[k]).sum::<T>() / denom;
    let rewards = RewardAverages { personalised: total(0), local: total(1), global: total(2) };
    let traces: Vec<RegretTrace<T>> = workers.iter().map(|w| w.trace.clone()).collect();

    Ok(RunResult {
        config: config.clone(),
        stop_depth: params.stop_depth,
        checkpoints: assemble(&times, &traces),
        rewards,
        phases,
        decisions,
        ledger,
        terminal: workers.iter().map(|w| w.state.terminal()).collect(),
        client_pulls: workers.iter().map(|w| w.state.pulls()).collect(),
        terminal_rounds,
        min_round_regret: workers.iter().map(|w| w.min_regret).fold(T::infinity(), T::min),
        truncated,
        transcript,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
