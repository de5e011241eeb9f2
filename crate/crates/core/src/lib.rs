//! Simulator for personalised federated X-armed bandits.
//!
//! Clients share a binary partition of `[0,1]^d` and each optimise a mixture
//! `alpha mu_m + (1 - alpha) mu` of their own objective and the average
//! objective. A server aggregates per-node means once per phase; clients
//! eliminate cells locally and refine the survivors.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod error;
pub mod federation;
pub mod harness;
pub mod objectives;
pub mod partition;
pub mod protocol;
pub mod scalar;

pub use error::{Error, Result};
pub use federation::{ClientState, EliminationDecision, FederationParams, Mode, Server};
pub use harness::{replicate, run, run_with_oracle, sweep_alpha, SimConfig};
pub use objectives::{BaseFunction, NoiseModel, ObjectiveSuite, OracleGrid, OracleReport};
pub use partition::{Cell, NodeId, Partition};
pub use protocol::{CommLedger, Message, Transcript};
pub use scalar::Real;

pub type Partition64 = Partition<f64>;
pub type Partition32 = Partition<f32>;
pub type Cell64 = Cell<f64>;
pub type Cell32 = Cell<f32>;
pub type ObjectiveSuite64 = ObjectiveSuite<f64>;
pub type ObjectiveSuite32 = ObjectiveSuite<f32>;
pub type OracleReport64 = OracleReport<f64>;
pub type OracleReport32 = OracleReport<f32>;
pub type ClientState64 = ClientState<f64>;
pub type ClientState32 = ClientState<f32>;
pub type Server64 = Server<f64>;
pub type Server32 = Server<f32>;
pub type FederationParams64 = FederationParams<f64>;
pub type FederationParams32 = FederationParams<f32>;
pub type Message64 = Message<f64>;
pub type Message32 = Message<f32>;
pub type RunResult64 = harness::RunResult<f64>;
pub type RunResult32 = harness::RunResult<f32>;
pub type ReplicationSummary64 = harness::ReplicationSummary<f64>;
pub type ReplicationSummary32 = harness::ReplicationSummary<f32>;
pub type AlphaSweepTable64 = harness::AlphaSweepTable<f64>;
pub type AlphaSweepTable32 = harness::AlphaSweepTable<f32>;
