//! Client/server message schema, wire codec and communication accounting.
//!
//! Only four message kinds ever cross the client/server boundary and none of
//! them carries individual rewards: clients share active sets and per-node
//! means, the server shares unions, budgets and averaged means.
//!
//! Payload sizes are counted in scalars: one per node id, one for the phase
//! budget, two per estimate entry.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::partition::NodeId;
use crate::scalar::Real;

/// A client's active set for the upcoming phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetUpload {
    pub phase: u32,
    pub client: usize,
    pub nodes: Vec<NodeId>,
}

impl ActiveSetUpload {
    /// Non-empty, one depth, made of complete sibling pairs.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.nodes.first() else {
            return Err(Error::MalformedUpload(format!("client {} sent an empty active set", self.client)));
        };
        if let Some(other) = self.nodes.iter().find(|n| n.depth != first.depth) {
            return Err(Error::DepthMismatch { first: first.depth, other: other.depth });
        }
        let set: BTreeSet<NodeId> = self.nodes.iter().copied().collect();
        if set.len() != self.nodes.len() {
            return Err(Error::MalformedUpload(format!("client {} sent duplicate nodes", self.client)));
        }
        for n in &set {
            let sibling = if n.index % 2 == 1 { n.index + 1 } else { n.index - 1 };
            if !set.contains(&NodeId::new(n.depth, sibling)) {
                return Err(Error::MalformedUpload(format!("node {n} uploaded without its sibling")));
            }
        }
        Ok(())
    }
}

/// Union of active sets and the sampling budget for the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PhaseBroadcast<T> {
    pub phase: u32,
    pub depth: u32,
    /// Sorted by `(depth, index)`.
    pub active: Vec<NodeId>,
    pub budget: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimateEntry<T> {
    pub node: NodeId,
    pub mean: T,
    pub count: u64,
}

/// A client's per-node local means after its exploration sub-phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimateUpload<T> {
    pub phase: u32,
    pub client: usize,
    pub estimates: Vec<EstimateEntry<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GlobalEntry<T> {
    pub node: NodeId,
    pub mean: T,
}

/// Server-side averages of the uploaded local means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GlobalEstimateBroadcast<T> {
    pub phase: u32,
    pub estimates: Vec<GlobalEntry<T>>,
}

impl<T: Real> GlobalEstimateBroadcast<T> {
    pub fn get(&self, node: NodeId) -> Option<T> {
        self.estimates
            .binary_search_by(|e| e.node.cmp(&node))
            .ok()
            .map(|k| self.estimates[k].mean)
    }
}

/// Everything that may cross the client/server boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", bound = "T: Real")]
pub enum Message<T> {
    ActiveSetUpload(ActiveSetUpload),
    PhaseBroadcast(PhaseBroadcast<T>),
    EstimateUpload(EstimateUpload<T>),
    GlobalEstimateBroadcast(GlobalEstimateBroadcast<T>),
}

impl<T: Real> Message<T> {
    pub fn phase(&self) -> u32 {
        match self {
            Message::ActiveSetUpload(m) => m.phase,
            Message::PhaseBroadcast(m) => m.phase,
            Message::EstimateUpload(m) => m.phase,
            Message::GlobalEstimateBroadcast(m) => m.phase,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::ActiveSetUpload(_) => "ActiveSetUpload",
            Message::PhaseBroadcast(_) => "PhaseBroadcast",
            Message::EstimateUpload(_) => "EstimateUpload",
            Message::GlobalEstimateBroadcast(_) => "GlobalEstimateBroadcast",
        }
    }

    pub fn scalar_count(&self) -> u64 {
        match self {
            Message::ActiveSetUpload(m) => m.nodes.len() as u64,
            Message::PhaseBroadcast(m) => m.active.len() as u64 + 1,
            Message::EstimateUpload(m) => 2 * m.estimates.len() as u64,
            Message::GlobalEstimateBroadcast(m) => 2 * m.estimates.len() as u64,
        }
    }

    pub fn is_upload(&self) -> bool {
        matches!(self, Message::ActiveSetUpload(_) | Message::EstimateUpload(_))
    }
}

macro_rules! into_message {
    ($($ty:ident $(<$g:ident>)?),*) => {$(
        impl<T: Real> From<$ty $(<$g>)?> for Message<T> {
            fn from(m: $ty $(<$g>)?) -> Self {
                Message::$ty(m)
            }
        }
    )*};
}
into_message!(ActiveSetUpload, PhaseBroadcast<T>, EstimateUpload<T>, GlobalEstimateBroadcast<T>);

/// A frame that does not conform to the message schema.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrivacyViolation {
    #[error("message kind {0:?} is not allowed across the boundary")]
    UnknownKind(String),
    #[error("field {field:?} is not part of the {kind} schema")]
    ForbiddenField { kind: String, field: String },
    #[error("malformed message: {0}")]
    Malformed(String),
}

type Schema = (&'static [&'static str], Option<(&'static str, &'static [&'static str])>);

fn schema(kind: &str) -> Option<Schema> {
    match kind {
        "ActiveSetUpload" => Some((&["kind", "phase", "client", "nodes"], None)),
        "PhaseBroadcast" => Some((&["kind", "phase", "depth", "active", "budget"], None)),
        "EstimateUpload" => Some((&["kind", "phase", "client", "estimates"], Some(("estimates", &["node", "mean", "count"])))),
        "GlobalEstimateBroadcast" => Some((&["kind", "phase", "estimates"], Some(("estimates", &["node", "mean"])))),
        _ => None,
    }
}

fn check_fields(kind: &str, obj: &serde_json::Map<String, Value>, allowed: &[&str]) -> Result<(), PrivacyViolation> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(field) => Err(PrivacyViolation::ForbiddenField { kind: kind.into(), field: field.clone() }),
        None => Ok(()),
    }
}

fn check_node_list(kind: &str, list: Option<&Value>) -> Result<(), PrivacyViolation> {
    if let Some(Value::Array(items)) = list {
        for item in items {
            let obj = item
                .as_object()
                .ok_or_else(|| PrivacyViolation::Malformed(format!("{kind}: node is not an object")))?;
            check_fields(kind, obj, &["depth", "index"])?;
        }
    }
    Ok(())
}

/// Checks a decoded JSON message against the schema of its kind and rejects
/// anything else, naming the offending field.
pub fn validate_privacy_value<T: Real>(value: &Value) -> Result<Message<T>, PrivacyViolation> {
    let obj = value
        .as_object()
        .ok_or_else(|| PrivacyViolation::Malformed("message is not an object".into()))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| PrivacyViolation::Malformed("missing kind".into()))?;
    let (fields, nested) = schema(kind).ok_or_else(|| PrivacyViolation::UnknownKind(kind.into()))?;
    check_fields(kind, obj, fields)?;
    check_node_list(kind, obj.get("nodes"))?;
    check_node_list(kind, obj.get("active"))?;
    if let Some((list, entry_fields)) = nested {
        if let Some(Value::Array(items)) = obj.get(list) {
            for item in items {
                let entry = item
                    .as_object()
                    .ok_or_else(|| PrivacyViolation::Malformed(format!("{kind}: entry is not an object")))?;
                check_fields(kind, entry, entry_fields)?;
                if let Some(Value::Object(node)) = entry.get("node") {
                    check_fields(kind, node, &["depth", "index"])?;
                }
            }
        }
    }
    serde_json::from_value(value.clone()).map_err(|e| PrivacyViolation::Malformed(e.to_string()))
}

/// Validates one wire frame; see [`validate_privacy_value`].
pub fn validate_privacy<T: Real>(frame: &str) -> Result<Message<T>, PrivacyViolation> {
    let body = split_frame(frame).map_err(|e| PrivacyViolation::Malformed(e.to_string()))?;
    let value: Value = serde_json::from_str(body).map_err(|e| PrivacyViolation::Malformed(e.to_string()))?;
    validate_privacy_value(&value)
}

/// Encodes a message as `<byte length>:<json>` on a single line.
pub fn encode<T: Real>(msg: &Message<T>) -> String {
    let body = serde_json::to_string(msg).expect("messages always serialize");
    format!("{}:{}", body.len(), body)
}

fn split_frame(frame: &str) -> Result<&str> {
    let frame = frame.trim_end_matches('\n');
    let (len, body) = frame
        .split_once(':')
        .ok_or_else(|| Error::Codec("frame has no length prefix".into()))?;
    let len: usize = len
        .parse()
        .map_err(|_| Error::Codec(format!("bad length prefix {len:?}")))?;
    if body.len() != len {
        return Err(Error::Codec(format!("length prefix {len} but body has {} bytes", body.len())));
    }
    Ok(body)
}

/// Decodes and schema-checks one frame.
pub fn decode<T: Real>(frame: &str) -> Result<Message<T>> {
    Ok(validate_privacy(frame)?)
}

/// Ordered record of every frame exchanged in a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    lines: Vec<String>,
}

impl Transcript {
    pub fn push<T: Real>(&mut self, msg: &Message<T>) {
        self.lines.push(encode(msg));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTraffic {
    pub phase: u32,
    pub uploaded_scalars: u64,
    pub downloaded_scalars: u64,
    pub round_trips: u32,
}

/// Per-phase and running communication totals.
///
/// A round-trip is one upload wave from all clients answered by one server
/// broadcast. Downloads are counted once per receiving client.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    phases: Vec<PhaseTraffic>,
    pub uploaded_scalars: u64,
    pub downloaded_scalars: u64,
    pub round_trips: u32,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_phase(&mut self, phase: u32) {
        self.phases.push(PhaseTraffic { phase, ..Default::default() });
    }

    pub fn current_phase(&self) -> Option<u32> {
        self.phases.last().map(|p| p.phase)
    }

    pub fn phases(&self) -> &[PhaseTraffic] {
        &self.phases
    }

    fn current_mut(&mut self, phase: u32) -> Result<&mut PhaseTraffic> {
        match self.phases.last_mut() {
            Some(p) if p.phase == phase => Ok(p),
            Some(p) => Err(Error::PhaseMismatch { expected: p.phase, got: phase }),
            None => Err(Error::PhaseMismatch { expected: 0, got: phase }),
        }
    }

    pub fn record_upload<T: Real>(&mut self, msg: &Message<T>) -> Result<()> {
        let n = msg.scalar_count();
        self.current_mut(msg.phase())?.uploaded_scalars += n;
        self.uploaded_scalars += n;
        Ok(())
    }

    /// Records a server broadcast delivered to `recipients` clients; each
    /// broadcast closes one round-trip.
    pub fn record_broadcast<T: Real>(&mut self, msg: &Message<T>, recipients: usize) -> Result<()> {
        let n = msg.scalar_count() * recipients as u64;
        let phase = self.current_mut(msg.phase())?;
        phase.downloaded_scalars += n;
        phase.round_trips += 1;
        self.downloaded_scalars += n;
        self.round_trips += 1;
        Ok(())
    }
}
