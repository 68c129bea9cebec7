//! Core vocabulary: QoS classes, packets, UEs and the per-TTI RBG map.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::traffic::FlowSpec;

/// Milliseconds. The simulation clock ticks in whole 1 ms TTIs.
pub type Millis = u64;

pub type UeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceType {
    #[serde(rename = "GBR")]
    Gbr,
    #[serde(rename = "Non-GBR")]
    NonGbr,
}

/// Service label of a QCI row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowLabel {
    Voice,
    #[serde(rename = "IMS")]
    Ims,
    Video,
    #[serde(rename = "V2X")]
    V2x,
}

impl FlowLabel {
    pub const ALL: [FlowLabel; 4] = [FlowLabel::Voice, FlowLabel::Ims, FlowLabel::Video, FlowLabel::V2x];

    /// Dense index used for per-class arrays and one-hot encodings.
    pub fn index(self) -> usize {
        match self {
            FlowLabel::Voice => 0,
            FlowLabel::Ims => 1,
            FlowLabel::Video => 2,
            FlowLabel::V2x => 3,
        }
    }

    pub fn class(self) -> &'static FlowClass {
        &FLOW_CLASSES[self.index()]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowLabel::Voice => "Voice",
            FlowLabel::Ims => "IMS",
            FlowLabel::Video => "Video",
            FlowLabel::V2x => "V2X",
        }
    }

    pub fn from_qci(qci: u8) -> Option<FlowLabel> {
        FLOW_CLASSES.iter().find(|c| c.qci == qci).map(|c| c.label)
    }
}

impl fmt::Display for FlowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FlowLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FlowLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown flow class `{s}`"))
    }
}

/// One QCI row: resource type, priority, packet delay budget and service label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowClass {
    pub qci: u8,
    pub resource_type: ResourceType,
    /// Lower value means higher scheduling priority.
    pub priority: f64,
    pub delay_budget_ms: Millis,
    pub label: FlowLabel,
}

/// The four traffic classes, indexed by [`FlowLabel::index`].
pub const FLOW_CLASSES: [FlowClass; 4] = [
    FlowClass { qci: 1, resource_type: ResourceType::Gbr, priority: 2.0, delay_budget_ms: 100, label: FlowLabel::Voice },
    FlowClass { qci: 5, resource_type: ResourceType::NonGbr, priority: 1.0, delay_budget_ms: 100, label: FlowLabel::Ims },
    FlowClass { qci: 6, resource_type: ResourceType::NonGbr, priority: 6.0, delay_budget_ms: 300, label: FlowLabel::Video },
    FlowClass { qci: 75, resource_type: ResourceType::Gbr, priority: 2.5, delay_budget_ms: 20, label: FlowLabel::V2x },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketStatus {
    Queued,
    /// Waiting for a HARQ retransmission opportunity.
    HarqPending,
    Delivered,
    Dropped,
}

/// A MAC-level downlink unit.
///
/// Latency components are whole milliseconds:
/// * `t_hol`: arrival until the first transmission opportunity,
/// * `t_tx`: TTIs spanned by transmission attempts,
/// * `t_harq`: HARQ round trips plus any wait before a retransmission is granted.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowLabel,
    pub ue_id: UeId,
    pub size_bits: u32,
    /// Bits of the current attempt not yet put on the air.
    pub remaining_bits: u32,
    pub arrival_tti: u64,
    pub t_hol: Millis,
    pub t_tx: Millis,
    pub t_harq: Millis,
    pub retx_count: u8,
    pub status: PacketStatus,
    /// First TTI of the current transmission attempt, if it has started.
    pub(crate) attempt_start: Option<u64>,
    /// TTI from which a pending retransmission may be granted.
    pub(crate) retx_ready: Option<u64>,
}

impl Packet {
    pub fn new(id: u64, flow: FlowLabel, ue_id: UeId, size_bits: u32, arrival_tti: u64) -> Self {
        Self {
            id,
            flow,
            ue_id,
            size_bits,
            remaining_bits: size_bits,
            arrival_tti,
            t_hol: 0,
            t_tx: 0,
            t_harq: 0,
            retx_count: 0,
            status: PacketStatus::Queued,
            attempt_start: None,
            retx_ready: None,
        }
    }

    pub fn class(&self) -> &'static FlowClass {
        self.flow.class()
    }

    /// True once the packet has been granted its first transmission.
    pub fn has_started(&self) -> bool {
        self.attempt_start.is_some() || self.retx_count > 0
    }

    /// Current head-of-line age at `tti`: time spent waiting since arrival.
    pub fn age_at(&self, tti: u64) -> Millis {
        tti.saturating_sub(self.arrival_tti)
    }
}

/// Total packet latency, `t_hol + t_tx + t_harq`.
pub fn packet_latency(p: &Packet) -> Millis {
    p.t_hol + p.t_tx + p.t_harq
}

/// A completed packet is satisfied when it was delivered and its HOL delay is
/// strictly lower than the class delay budget. Dropped packets never are.
pub fn is_satisfied(p: &Packet) -> bool {
    p.status == PacketStatus::Delivered && p.t_hol < p.class().delay_budget_ms
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-UE, per-class FIFO.
#[derive(Debug, Clone)]
pub struct FlowQueue {
    pub spec: FlowSpec,
    pub packets: VecDeque<Packet>,
}

impl FlowQueue {
    pub fn new(spec: FlowSpec) -> Self {
        Self { spec, packets: VecDeque::new() }
    }

    pub fn backlog_bits(&self) -> u64 {
        self.packets.iter().map(|p| u64::from(p.remaining_bits)).sum()
    }

    pub fn head(&self) -> Option<&Packet> {
        self.packets.front()
    }
}

#[derive(Debug, Clone)]
pub struct UeState {
    pub ue_id: UeId,
    pub position: Point,
    /// Metres per second.
    pub velocity: Point,
    pub serving_bs: usize,
    pub cqi: u8,
    pub queues: Vec<FlowQueue>,
}

impl UeState {
    pub fn is_mobile(&self) -> bool {
        self.velocity != Point::default()
    }

    pub fn queue(&self, flow: FlowLabel) -> Option<&FlowQueue> {
        self.queues.iter().find(|q| q.spec.flow == flow)
    }

    pub fn queue_mut(&mut self, flow: FlowLabel) -> Option<&mut FlowQueue> {
        self.queues.iter_mut().find(|q| q.spec.flow == flow)
    }
}

/// A single RBG grant: which UE and which of its flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub ue_id: UeId,
    pub flow: FlowLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RbgMapError {
    #[error("RBG {0} is out of range")]
    OutOfRange(usize),
    #[error("RBG {0} is already assigned")]
    AlreadyAssigned(usize),
}

/// Per-TTI resource block group map of one base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbgMap {
    pub tti: u64,
    assignments: Vec<Option<Grant>>,
}

impl RbgMap {
    pub fn new(tti: u64, n_rbg: usize) -> Self {
        Self { tti, assignments: vec![None; n_rbg] }
    }

    /// Number of RBGs formed from `n_rb` resource blocks.
    pub fn rbg_count(n_rb: usize, rbg_size: usize) -> usize {
        if rbg_size == 0 {
            0
        } else {
            n_rb / rbg_size
        }
    }

    pub fn n_rbg(&self) -> usize {
        self.assignments.len()
    }

    pub fn assign(&mut self, rbg: usize, grant: Grant) -> Result<(), RbgMapError> {
        let slot = self.assignments.get_mut(rbg).ok_or(RbgMapError::OutOfRange(rbg))?;
        if slot.is_some() {
            return Err(RbgMapError::AlreadyAssigned(rbg));
        }
        *slot = Some(grant);
        Ok(())
    }

    pub fn get(&self, rbg: usize) -> Option<Grant> {
        self.assignments.get(rbg).copied().flatten()
    }

    pub fn assignments(&self) -> &[Option<Grant>] {
        &self.assignments
    }

    pub fn assigned_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned_count() == 0
    }

    /// Number of RBGs granted to each (UE, flow), in first-grant order.
    pub fn grants(&self) -> Vec<(Grant, usize)> {
        let mut out: Vec<(Grant, usize)> = Vec::new();
        for g in self.assignments.iter().flatten() {
            match out.iter_mut().find(|(k, _)| k == g) {
                Some((_, n)) => *n += 1,
                None => out.push((*g, 1)),
            }
        }
        out
    }
}
