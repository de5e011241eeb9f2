//! Phased elimination on the client and aggregation on the server.
//!
//! Every phase runs at a single depth `h_p = p`. A client pulls each node of
//! the union active set `ceil((1-alpha) f(p))` times, then each of its own
//! nodes `ceil(M alpha f(p))` times, uploads its local means, and keeps
//! pulling its best own node until the server's averaged means arrive. It
//! then eliminates nodes whose mixed estimate trails the exploit node by more
//! than `nu1 rho^h + 2 B_p` and splits the survivors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::mix;
use crate::partition::{NodeId, MAX_SUPPORTED_DEPTH};
use crate::protocol::{
    ActiveSetUpload, EstimateEntry, EstimateUpload, GlobalEntry, GlobalEstimateBroadcast, PhaseBroadcast,
};
use crate::scalar::{ceil_count, Real};

/// Default confidence constant `c = sqrt(2)`.
pub fn default_confidence_constant<T: Real>() -> T {
    T::of(2.0).sqrt()
}

/// Per-phase sampling budget `f(p) = 2 ln T / (M nu1^2 rho^(2h))`.
pub fn phase_budget<T: Real>(horizon: u64, clients: usize, nu1: T, rho: T, depth: u32) -> T {
    let ln_t = T::from_u64(horizon).expect("horizon fits").ln();
    T::of(2.0) * ln_t / (T::of_usize(clients) * nu1 * nu1 * rho.powi(2 * depth as i32))
}

/// `B_p = c sqrt(ln T / (M f(p)))`.
pub fn confidence_radius<T: Real>(horizon: u64, clients: usize, budget: T, c: T) -> T {
    let ln_t = T::from_u64(horizon).expect("horizon fits").ln();
    c * (ln_t / (T::of_usize(clients) * budget)).sqrt()
}

/// `H = ceil(ln T / ((d' + 3) ln(1/rho)))`, at least 1.
pub fn stopping_depth<T: Real>(horizon: u64, rho: T, d_prime: T) -> u32 {
    let ln_t = T::from_u64(horizon.max(1)).expect("horizon fits").ln();
    let h = (ln_t / ((d_prime + T::of(3.0)) * (T::one() / rho).ln())).ceil();
    h.to_u32().unwrap_or(MAX_SUPPORTED_DEPTH).clamp(1, MAX_SUPPORTED_DEPTH)
}

/// Pulls per node in each exploration sub-phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    /// `ceil((1-alpha) f(p))`, for every node of the union set.
    pub global: u64,
    /// `ceil(M alpha f(p))`, for each of the client's own nodes.
    pub local: u64,
}

impl SampleCounts {
    pub fn new<T: Real>(alpha: T, clients: usize, budget: T) -> Self {
        SampleCounts {
            global: ceil_count((T::one() - alpha) * budget),
            local: ceil_count(T::of_usize(clients) * alpha * budget),
        }
    }

    /// Samples behind an own node's mixed estimate across the federation:
    /// `ceil(M alpha f) + M ceil((1-alpha) f)`.
    pub fn effective_own_samples(&self, clients: usize) -> u64 {
        self.local + clients as u64 * self.global
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PullKind {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub node: NodeId,
    pub pulls: u64,
    pub kind: PullKind,
}

/// Ordered exploration schedule: union nodes first, then own nodes, each in
/// `(depth, index)` order. Zero-pull blocks are dropped.
pub fn plan_schedule(union: &[NodeId], own: &[NodeId], counts: SampleCounts) -> Vec<ScheduleBlock> {
    let global = union
        .iter()
        .filter(|_| counts.global > 0)
        .map(|&node| ScheduleBlock { node, pulls: counts.global, kind: PullKind::Global });
    let local = own
        .iter()
        .filter(|_| counts.local > 0)
        .map(|&node| ScheduleBlock { node, pulls: counts.local, kind: PullKind::Local });
    global.chain(local).collect()
}

/// Argmax of `values` over `nodes`; ties go to the smallest node.
fn argmax_over<T: Real>(nodes: &[NodeId], value: impl Fn(NodeId) -> Option<T>) -> Option<NodeId> {
    let mut best: Option<(NodeId, T)> = None;
    for &n in nodes {
        if let Some(v) = value(n) {
            match best {
                Some((bn, bv)) if v < bv || (v == bv && bn < n) => {}
                _ => best = Some((n, v)),
            }
        }
    }
    best.map(|(n, _)| n)
}

/// Best own node by local estimate.
pub fn exploit_node<T: Real>(own: &[NodeId], local: &BTreeMap<NodeId, T>) -> Option<NodeId> {
    argmax_over(own, |n| local.get(&n).copied())
}

/// `alpha * local + (1 - alpha) * global` for every own node.
pub fn mix_estimates<T: Real>(
    own: &[NodeId],
    alpha: T,
    local: &BTreeMap<NodeId, T>,
    global: &GlobalEstimateBroadcast<T>,
) -> Result<BTreeMap<NodeId, T>> {
    own.iter()
        .map(|&node| {
            let l = *local.get(&node).ok_or(Error::NodeWithoutData { node })?;
            let g = global.get(node).ok_or(Error::MissingGlobalEstimate { node })?;
            Ok((node, mix(alpha, l, g)))
        })
        .collect()
}

/// Nodes whose mixed estimate satisfies
/// `mixed + nu1 rho^h <= mixed(exploit) - 2 B_p`.
pub fn elimination_set<T: Real>(
    mixed: &BTreeMap<NodeId, T>,
    exploit: NodeId,
    node_width: T,
    radius: T,
) -> Vec<NodeId> {
    let threshold = mixed[&exploit] - T::of(2.0) * radius;
    mixed
        .iter()
        .filter(|&(_, &v)| v + node_width <= threshold)
        .map(|(&n, _)| n)
        .collect()
}

/// Node with the best mixed estimate among `survivors`.
pub fn terminal_action<T: Real>(survivors: &[NodeId], mixed: &BTreeMap<NodeId, T>) -> Option<NodeId> {
    argmax_over(survivors, |n| mixed.get(&n).copied())
}

/// Algorithm constants shared by every client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationParams<T> {
    pub horizon: u64,
    pub clients: usize,
    pub alpha: T,
    pub nu1: T,
    pub rho: T,
    pub c: T,
    pub stop_depth: u32,
}

impl<T: Real> FederationParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.clients < 1 {
            return bad("at least one client required".into());
        }
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return bad(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        if !(self.rho > T::zero() && self.rho < T::one()) {
            return bad(format!("rho must lie in (0,1), got {}", self.rho));
        }
        if !(self.nu1 > T::zero()) {
            return bad(format!("nu1 must be positive, got {}", self.nu1));
        }
        if !(self.c > T::zero()) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if self.stop_depth < 1 || self.stop_depth >= MAX_SUPPORTED_DEPTH {
            return bad(format!("stopping depth must lie in [1, {MAX_SUPPORTED_DEPTH}), got {}", self.stop_depth));
        }
        Ok(())
    }

    pub fn node_width(&self, depth: u32) -> T {
        self.nu1 * self.rho.powi(depth as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    GlobalExplore,
    LocalExplore,
    /// Estimates uploaded; pulling the exploit node until the server answers.
    AwaitExploit,
    /// Between phases: elimination is done and the next active set is ready.
    Eliminate,
    Terminal,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::GlobalExplore => "GlobalExplore",
            Mode::LocalExplore => "LocalExplore",
            Mode::AwaitExploit => "AwaitExploit",
            Mode::Eliminate => "Eliminate",
            Mode::Terminal => "Terminal",
        }
    }
}

/// Outcome of one client's elimination step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EliminationDecision<T> {
    pub phase: u32,
    pub client: usize,
    pub depth: u32,
    pub radius: T,
    pub node_width: T,
    pub exploit: NodeId,
    /// Own nodes with their local and mixed estimates.
    pub estimates: Vec<NodeEstimate<T>>,
    pub eliminated: Vec<NodeId>,
    pub survivors: Vec<NodeId>,
    /// Children of the survivors; empty when the stopping depth was reached.
    pub next_active: Vec<NodeId>,
    pub terminal: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NodeEstimate<T> {
    pub node: NodeId,
    pub local: T,
    pub mixed: T,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Accumulator<T> {
    sum: T,
    count: u64,
}

/// One client's protocol state.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    id: usize,
    params: FederationParams<T>,
    phase: u32,
    mode: Mode,
    own: Vec<NodeId>,
    union: Vec<NodeId>,
    budget: T,
    schedule: Vec<ScheduleBlock>,
    cursor: usize,
    done_in_block: u64,
    stats: BTreeMap<NodeId, Accumulator<T>>,
    local: BTreeMap<NodeId, T>,
    global: BTreeMap<NodeId, T>,
    mixed: BTreeMap<NodeId, T>,
    exploit: Option<NodeId>,
    terminal: Option<NodeId>,
    pulls: u64,
}

impl<T: Real> ClientState<T> {
    pub fn new(id: usize, params: FederationParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(ClientState {
            id,
            params,
            phase: 1,
            mode: Mode::Eliminate,
            own: vec![NodeId::new(1, 1), NodeId::new(1, 2)],
            union: Vec::new(),
            budget: T::zero(),
            schedule: Vec::new(),
            cursor: 0,
            done_in_block: 0,
            stats: BTreeMap::new(),
            local: BTreeMap::new(),
            global: BTreeMap::new(),
            mixed: BTreeMap::new(),
            exploit: None,
            terminal: None,
            pulls: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn depth(&self) -> u32 {
        self.own.first().map_or(self.phase, |n| n.depth)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn own_active(&self) -> &[NodeId] {
        &self.own
    }

    pub fn union_active(&self) -> &[NodeId] {
        &self.union
    }

    pub fn schedule(&self) -> &[ScheduleBlock] {
        &self.schedule
    }

    pub fn schedule_len(&self) -> u64 {
        self.schedule.iter().map(|b| b.pulls).sum()
    }

    pub fn exploit(&self) -> Option<NodeId> {
        self.exploit
    }

    pub fn terminal(&self) -> Option<NodeId> {
        self.terminal
    }

    /// Total rounds this client has played.
    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// `(sum, count)` of exploration rewards for a node in the current phase.
    pub fn node_stats(&self, node: NodeId) -> Option<(T, u64)> {
        self.stats.get(&node).map(|a| (a.sum, a.count))
    }

    fn wrong_mode(&self, action: &'static str) -> Error {
        Error::InvalidMode { client: self.id, mode: self.mode.name(), action }
    }

    pub fn active_set_upload(&self) -> Result<ActiveSetUpload> {
        if self.mode != Mode::Eliminate {
            return Err(self.wrong_mode("uploading an active set"));
        }
        Ok(ActiveSetUpload { phase: self.phase, client: self.id, nodes: self.own.clone() })
    }

    /// Receives the phase broadcast and lays out this phase's pulls.
    pub fn plan_schedule(&mut self, broadcast: &PhaseBroadcast<T>) -> Result<&[ScheduleBlock]> {
        if self.mode != Mode::Eliminate {
            return Err(self.wrong_mode("starting a phase"));
        }
        if broadcast.phase != self.phase {
            return Err(Error::PhaseMismatch { expected: self.phase, got: broadcast.phase });
        }
        let union: BTreeSet<NodeId> = broadcast.active.iter().copied().collect();
        if let Some(&n) = self.own.iter().find(|n| !union.contains(n)) {
            return Err(Error::MalformedUpload(format!("own node {n} missing from the broadcast union")));
        }
        self.union = union.into_iter().collect();
        self.budget = broadcast.budget;
        let counts = SampleCounts::new(self.params.alpha, self.params.clients, self.budget);
        self.schedule = plan_schedule(&self.union, &self.own, counts);
        self.cursor = 0;
        self.done_in_block = 0;
        self.stats = self.union.iter().map(|&n| (n, Accumulator::default())).collect();
        self.local.clear();
        self.global.clear();
        self.mixed.clear();
        self.exploit = None;
        self.mode = Mode::GlobalExplore;
        self.sync_explore_mode();
        Ok(&self.schedule)
    }

    fn sync_explore_mode(&mut self) {
        match self.schedule.get(self.cursor) {
            Some(b) => {
                self.mode = match b.kind {
                    PullKind::Global => Mode::GlobalExplore,
                    PullKind::Local => Mode::LocalExplore,
                }
            }
            None => self.finish_exploration(),
        }
    }

    fn finish_exploration(&mut self) {
        self.local = self
            .stats
            .iter()
            .filter(|(_, a)| a.count > 0)
            .map(|(&n, a)| (n, a.sum / T::from_u64(a.count).expect("count fits")))
            .collect();
        self.exploit = exploit_node(&self.own, &self.local);
        self.mode = Mode::AwaitExploit;
    }

    /// Node to play this round, if the client is not between phases.
    pub fn next_action(&self) -> Option<NodeId> {
        match self.mode {
            Mode::GlobalExplore | Mode::LocalExplore => self.schedule.get(self.cursor).map(|b| b.node),
            Mode::AwaitExploit => self.exploit,
            Mode::Terminal => self.terminal,
            Mode::Eliminate => None,
        }
    }

    /// Rounds left in the current exploration block (0 outside exploration).
    pub fn block_remaining(&self) -> u64 {
        match self.mode {
            Mode::GlobalExplore | Mode::LocalExplore => {
                self.schedule.get(self.cursor).map_or(0, |b| b.pulls - self.done_in_block)
            }
            _ => 0,
        }
    }

    /// Records one round. Exploration pulls must follow the schedule and
    /// update the node statistics; exploit and terminal pulls must play the
    /// chosen node and leave statistics untouched.
    pub fn record_pull(&mut self, node: NodeId, reward: T) -> Result<()> {
        match self.mode {
            Mode::GlobalExplore | Mode::LocalExplore => {
                let block = self.schedule[self.cursor];
                if block.node != node {
                    return Err(Error::PullOutsideSchedule { client: self.id, node, expected: block.node.to_string() });
                }
                let acc = self.stats.get_mut(&node).expect("scheduled nodes have accumulators");
                acc.sum = acc.sum + reward;
                acc.count += 1;
                self.pulls += 1;
                self.done_in_block += 1;
                if self.done_in_block == block.pulls {
                    self.cursor += 1;
                    self.done_in_block = 0;
                    self.sync_explore_mode();
                }
                Ok(())
            }
            Mode::AwaitExploit | Mode::Terminal => {
                let expected = self.next_action().expect("exploit node set");
                if expected != node {
                    return Err(Error::PullOutsideSchedule { client: self.id, node, expected: expected.to_string() });
                }
                self.pulls += 1;
                Ok(())
            }
            Mode::Eliminate => Err(self.wrong_mode("pulling")),
        }
    }

    /// Plays the exploit or terminal node for `rounds` rounds.
    pub fn record_exploit_rounds(&mut self, rounds: u64) -> Result<()> {
        match self.mode {
            Mode::AwaitExploit | Mode::Terminal => {
                self.pulls += rounds;
                Ok(())
            }
            _ => Err(self.wrong_mode("exploiting")),
        }
    }

    /// Local means for every union node with data, after exploration.
    pub fn local_estimates(&self) -> Result<EstimateUpload<T>> {
        if self.mode != Mode::AwaitExploit {
            return Err(self.wrong_mode("reporting estimates"));
        }
        let estimates = self
            .union
            .iter()
            .filter_map(|n| {
                let acc = self.stats.get(n)?;
                let mean = *self.local.get(n)?;
                Some(EstimateEntry { node: *n, mean, count: acc.count })
            })
            .collect();
        Ok(EstimateUpload { phase: self.phase, client: self.id, estimates })
    }

    /// Local mean of a union node; `None` means no data (possible only at alpha = 1).
    pub fn local_estimate(&self, node: NodeId) -> Option<T> {
        self.local.get(&node).copied()
    }

    pub fn mixed_estimates(&self) -> &BTreeMap<NodeId, T> {
        &self.mixed
    }

    /// Applies the server's global means: mix, eliminate, expand.
    pub fn receive_global(&mut self, broadcast: &GlobalEstimateBroadcast<T>) -> Result<EliminationDecision<T>> {
        if self.mode != Mode::AwaitExploit {
            return Err(self.wrong_mode("receiving global estimates"));
        }
        if broadcast.phase != self.phase {
            return Err(Error::PhaseMismatch { expected: self.phase, got: broadcast.phase });
        }
        let p = self.params;
        let depth = self.depth();
        self.global = broadcast.estimates.iter().map(|e| (e.node, e.mean)).collect();
        self.mixed = mix_estimates(&self.own, p.alpha, &self.local, broadcast)?;
        let exploit = self.exploit.expect("exploit node chosen after exploration");
        let radius = confidence_radius(p.horizon, p.clients, self.budget, p.c);
        let node_width = p.node_width(depth);
        let eliminated = elimination_set(&self.mixed, exploit, node_width, radius);
        debug_assert!(!eliminated.contains(&exploit));
        let gone: BTreeSet<NodeId> = eliminated.iter().copied().collect();
        let survivors: Vec<NodeId> = self.own.iter().copied().filter(|n| !gone.contains(n)).collect();

        let estimates = self
            .own
            .iter()
            .map(|&n| NodeEstimate {
                node: n,
                local: self.local[&n],
                mixed: self.mixed[&n],
                samples: self.stats[&n].count,
            })
            .collect();

        let mut decision = EliminationDecision {
            phase: self.phase,
            client: self.id,
            depth,
            radius,
            node_width,
            exploit,
            estimates,
            eliminated,
            survivors: survivors.clone(),
            next_active: Vec::new(),
            terminal: None,
        };

        if depth >= p.stop_depth {
            self.terminal = terminal_action(&survivors, &self.mixed);
            self.own = survivors;
            self.mode = Mode::Terminal;
            decision.terminal = self.terminal;
        } else {
            self.own = survivors
                .iter()
                .flat_map(|n| {
                    let (l, r) = n.children_unchecked();
                    [l, r]
                })
                .collect();
            self.phase += 1;
            self.mode = Mode::Eliminate;
            decision.next_active = self.own.clone();
        }
        Ok(decision)
    }
}

/// Barrier-synchronised aggregator.
#[derive(Debug, Clone)]
pub struct Server<T> {
    params: FederationParams<T>,
    phase: u32,
    active: Vec<NodeId>,
    budget: T,
}

impl<T: Real> Server<T> {
    pub fn new(params: FederationParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Server { params, phase: 0, active: Vec::new(), budget: T::zero() })
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn active(&self) -> &[NodeId] {
        &self.active
    }

    pub fn budget(&self) -> T {
        self.budget
    }

    /// Waits for one active set per client, then broadcasts the union and `f(p)`.
    pub fn begin_phase(&mut self, uploads: &[ActiveSetUpload]) -> Result<PhaseBroadcast<T>> {
        let p = self.params;
        let broadcast = server_begin_phase(uploads, p.horizon, p.clients, p.nu1, p.rho)?;
        self.phase = broadcast.phase;
        self.active = broadcast.active.clone();
        self.budget = broadcast.budget;
        Ok(broadcast)
    }

    pub fn aggregate(&self, uploads: &[EstimateUpload<T>]) -> Result<GlobalEstimateBroadcast<T>> {
        server_aggregate(self.phase, &self.active, self.params.clients, uploads)
    }
}

fn check_one_per_client(clients: usize, phase: u32, ids: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = vec![false; clients];
    for id in ids {
        match seen.get_mut(id) {
            Some(true) => return Err(Error::DuplicateClient { client: id, phase }),
            Some(s) => *s = true,
            None => return Err(Error::MalformedUpload(format!("unknown client {id}"))),
        }
    }
    match seen.iter().position(|s| !s) {
        Some(missing) => Err(Error::MissingClient { expected: clients, missing }),
        None => Ok(()),
    }
}

/// Union of the clients' active sets and the phase budget at their common depth.
pub fn server_begin_phase<T: Real>(
    uploads: &[ActiveSetUpload],
    horizon: u64,
    clients: usize,
    nu1: T,
    rho: T,
) -> Result<PhaseBroadcast<T>> {
    let first = uploads.first().ok_or(Error::MissingClient { expected: clients, missing: 0 })?;
    let phase = first.phase;
    if let Some(u) = uploads.iter().find(|u| u.phase != phase) {
        return Err(Error::PhaseMismatch { expected: phase, got: u.phase });
    }
    check_one_per_client(clients, phase, uploads.iter().map(|u| u.client))?;
    for u in uploads {
        u.validate()?;
    }
    let depth = first.nodes[0].depth;
    if let Some(u) = uploads.iter().find(|u| u.nodes[0].depth != depth) {
        return Err(Error::DepthMismatch { first: depth, other: u.nodes[0].depth });
    }
    let active: BTreeSet<NodeId> = uploads.iter().flat_map(|u| u.nodes.iter().copied()).collect();
    Ok(PhaseBroadcast {
        phase,
        depth,
        active: active.into_iter().collect(),
        budget: phase_budget(horizon, clients, nu1, rho, depth),
    })
}

/// Per-node mean of the uploaded local means, over the clients that sampled it.
pub fn server_aggregate<T: Real>(
    phase: u32,
    active: &[NodeId],
    clients: usize,
    uploads: &[EstimateUpload<T>],
) -> Result<GlobalEstimateBroadcast<T>> {
    if let Some(u) = uploads.iter().find(|u| u.phase != phase) {
        return Err(Error::PhaseMismatch { expected: phase, got: u.phase });
    }
    check_one_per_client(clients, phase, uploads.iter().map(|u| u.client))?;
    let mut sums: BTreeMap<NodeId, (T, usize)> = active.iter().map(|&n| (n, (T::zero(), 0))).collect();
    for u in uploads {
        for e in &u.estimates {
            let slot = sums
                .get_mut(&e.node)
                .ok_or_else(|| Error::MalformedUpload(format!("client {} reported {} outside the active set", u.client, e.node)))?;
            if e.count > 0 {
                slot.0 = slot.0 + e.mean;
                slot.1 += 1;
            }
        }
    }
    let estimates = sums
        .into_iter()
        .map(|(node, (sum, n))| {
            if n == 0 {
                Err(Error::NodeWithoutData { node })
            } else {
                Ok(GlobalEntry { node, mean: sum / T::of_usize(n) })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalEstimateBroadcast { phase, estimates })
}
