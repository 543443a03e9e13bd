//! Half-duplex relay state machine and slot schedule.
//!
//! A node alternates between receive and transmit slots handed out by
//! [`schedule`]. In a receive slot it accumulates bytes until an end byte
//! closes a frame, checks the upstream key chain, then appends its own key
//! and a fresh sensor reading. In its transmit slot it sends whatever frame
//! it holds. The sink appends its hop too but hands the frame to the
//! monitor instead of transmitting.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::channel::BITS_PER_BYTE;
use crate::frame::{
    self, append_hop, decode_frame, encode_frame, AuthKey, Frame, FrameError, SensorRecord, END,
    TEMP_MAX_C, TEMP_MIN_C,
};
use crate::netsim::Topology;
use crate::rng::TrialRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("protocol violation at node {node_id}: {detail}")]
    ProtocolViolation { node_id: u8, detail: String },
    #[error("slot of {slot_s} s is shorter than the {needed_s} s needed for a {frame_bytes}-byte frame")]
    SlotTooShort {
        slot_s: f64,
        needed_s: f64,
        frame_bytes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Originator,
    Relay,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    Receiving,
    Transmitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Rx,
    Tx,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    SlotStart { kind: SlotKind, at: f64 },
    BytesArrived { at: f64, bytes: Vec<u8> },
    /// The receiver saw a corrupted line symbol; the frame in flight is lost.
    LineError { at: f64 },
    SlotEnd { at: f64 },
}

impl NodeEvent {
    pub fn at(&self) -> f64 {
        match *self {
            NodeEvent::SlotStart { at, .. }
            | NodeEvent::BytesArrived { at, .. }
            | NodeEvent::LineError { at }
            | NodeEvent::SlotEnd { at } => at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    /// The receive slot ended without a frame.
    Timeout,
    LineError,
    Frame(FrameError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeAction {
    TransmitBytes(Vec<u8>),
    DeliverToMonitor { frame: Frame, at: f64 },
    DropPacket(DropReason),
}

/// Synthetic temperature source: a slow sine drift plus seeded noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorProfile {
    pub baseline_c: f64,
    pub amplitude_c: f64,
    pub period_s: f64,
    pub noise_std_c: f64,
    pub seed: u64,
}

impl Default for SensorProfile {
    fn default() -> Self {
        Self {
            baseline_c: 20.0,
            amplitude_c: 1.5,
            period_s: 3600.0,
            noise_std_c: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub node_id: u8,
    pub temperature_c: f64,
    pub timestamp_s: f64,
}

impl SensorReading {
    pub fn record(&self) -> SensorRecord {
        SensorRecord {
            node_id: self.node_id,
            temperature_c: self.temperature_c,
        }
    }
}

/// Deterministic in `(profile.seed, node_id, clock)`. Readings are clamped
/// to the range a record can carry.
pub fn sample_sensor(node_id: u8, clock_s: f64, profile: &SensorProfile) -> SensorReading {
    let mut t = profile.baseline_c + profile.amplitude_c * (2.0 * PI * clock_s / profile.period_s).sin();
    if profile.noise_std_c > 0.0 {
        let mut rng = TrialRng::new(profile.seed).substream(&[u64::from(node_id), clock_s.to_bits()]);
        let z: f64 = StandardNormal.sample(&mut rng);
        t += profile.noise_std_c * z;
    }
    SensorReading {
        node_id,
        temperature_c: t.clamp(TEMP_MIN_C, TEMP_MAX_C),
        timestamp_s: clock_s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: u8,
    pub role: NodeRole,
    pub phase: Phase,
    pub rx_buffer: Vec<u8>,
    pub pending_frame: Option<Frame>,
    pub own_key: AuthKey,
    pub expected_upstream_keys: Vec<AuthKey>,
    pub clock_s: f64,
    pub sensor: SensorProfile,
    /// Whether the current receive slot has already produced a frame or a drop.
    rx_resolved: bool,
}

impl NodeState {
    pub fn new(
        node_id: u8,
        role: NodeRole,
        own_key: AuthKey,
        expected_upstream_keys: Vec<AuthKey>,
        sensor: SensorProfile,
    ) -> Self {
        Self {
            node_id,
            role,
            phase: Phase::Idle,
            rx_buffer: Vec::new(),
            pending_frame: None,
            own_key,
            expected_upstream_keys,
            clock_s: 0.0,
            sensor,
            rx_resolved: false,
        }
    }

    /// One state per topology node, upstream keys taken from the line order.
    pub fn for_topology(topology: &Topology, sensor: SensorProfile) -> Vec<NodeState> {
        let nodes = topology.nodes();
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let upstream = nodes[..i].iter().map(|u| u.key).collect();
                NodeState::new(n.id, n.role, n.key, upstream, sensor)
            })
            .collect()
    }

    fn violation(&self, detail: impl Into<String>) -> NodeError {
        NodeError::ProtocolViolation {
            node_id: self.node_id,
            detail: detail.into(),
        }
    }

    /// Advances the machine by one event. Pure: `self` is not modified.
    pub fn step(&self, event: &NodeEvent) -> Result<(NodeState, Vec<NodeAction>), NodeError> {
        let at = event.at();
        if at.is_nan() || at < self.clock_s {
            return Err(self.violation(format!("event at {at} s precedes clock {} s", self.clock_s)));
        }
        let mut next = self.clone();
        next.clock_s = at;
        let mut actions = Vec::new();

        match event {
            NodeEvent::SlotStart { kind: SlotKind::Rx, .. } => {
                if self.role == NodeRole::Originator {
                    return Err(self.violation("originator has no receive slot"));
                }
                next.phase = Phase::Receiving;
                next.rx_buffer.clear();
                next.rx_resolved = false;
            }
            NodeEvent::SlotStart { kind: SlotKind::Tx, .. } => match self.role {
                NodeRole::Sink => return Err(self.violation("sink has no transmit slot")),
                NodeRole::Originator => {
                    let reading = sample_sensor(self.node_id, at, &self.sensor);
                    let frame = Frame::originate(self.own_key, reading.record());
                    next.phase = Phase::Transmitting;
                    match encode_frame(&frame) {
                        Ok(bytes) => {
                            next.pending_frame = Some(frame);
                            actions.push(NodeAction::TransmitBytes(bytes));
                        }
                        Err(e) => actions.push(NodeAction::DropPacket(DropReason::Frame(e))),
                    }
                }
                NodeRole::Relay => {
                    next.phase = Phase::Transmitting;
                    if let Some(frame) = &self.pending_frame {
                        match encode_frame(frame) {
                            Ok(bytes) => actions.push(NodeAction::TransmitBytes(bytes)),
                            Err(e) => {
                                next.pending_frame = None;
                                actions.push(NodeAction::DropPacket(DropReason::Frame(e)));
                            }
                        }
                    }
                }
            },
            NodeEvent::BytesArrived { bytes, .. } => {
                if self.role == NodeRole::Originator {
                    return Err(self.violation("originator does not receive"));
                }
                if self.phase != Phase::Receiving {
                    return Err(self.violation("bytes arrived outside a receive slot"));
                }
                next.rx_buffer.extend_from_slice(bytes);
                next.try_complete_frame(at, &mut actions);
            }
            NodeEvent::LineError { .. } => {
                if self.role == NodeRole::Originator {
                    return Err(self.violation("originator does not receive"));
                }
                if self.phase != Phase::Receiving {
                    return Err(self.violation("line error outside a receive slot"));
                }
                next.rx_buffer.clear();
                next.rx_resolved = true;
                actions.push(NodeAction::DropPacket(DropReason::LineError));
            }
            NodeEvent::SlotEnd { .. } => {
                match self.phase {
                    Phase::Transmitting => next.pending_frame = None,
                    Phase::Receiving | Phase::Idle if self.role != NodeRole::Originator && !self.rx_resolved => {
                        let reason = if self.rx_buffer.is_empty() {
                            DropReason::Timeout
                        } else {
                            DropReason::Frame(FrameError::TruncatedFrame)
                        };
                        actions.push(NodeAction::DropPacket(reason));
                    }
                    _ => {}
                }
                next.phase = Phase::Idle;
                next.rx_buffer.clear();
                next.rx_resolved = false;
            }
        }
        Ok((next, actions))
    }

    /// Decodes the buffer once an end byte shows up past the key region.
    fn try_complete_frame(&mut self, at: f64, actions: &mut Vec<NodeAction>) {
        let key_region = 2 + self.expected_upstream_keys.len();
        let Some(end) = self
            .rx_buffer
            .iter()
            .skip(key_region)
            .position(|&b| b == END)
            .map(|p| p + key_region)
        else {
            return;
        };
        let raw: Vec<u8> = self.rx_buffer.drain(..).take(end + 1).collect();
        self.rx_resolved = true;
        let reading = sample_sensor(self.node_id, at, &self.sensor);
        let result = decode_frame(&raw, &self.expected_upstream_keys)
            .and_then(|f| append_hop(&f, self.own_key, reading.record()));
        match result {
            Ok(frame) if self.role == NodeRole::Sink => {
                actions.push(NodeAction::DeliverToMonitor { frame, at });
            }
            Ok(frame) => self.pending_frame = Some(frame),
            Err(e) => {
                self.pending_frame = None;
                actions.push(NodeAction::DropPacket(DropReason::Frame(e)));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotAssignment {
    pub node_id: u8,
    pub kind: SlotKind,
    pub start_s: f64,
    pub end_s: f64,
}

/// Worst-case encoded size of any frame on a line of `nodes` nodes.
pub fn worst_case_frame_bytes(nodes: usize) -> usize {
    frame::max_frame_bytes(nodes, nodes)
}

pub fn serialization_time_s(frame_bytes: usize, bit_rate_bps: f64) -> f64 {
    (BITS_PER_BYTE * frame_bytes) as f64 / bit_rate_bps
}

/// Slot length used when the configuration leaves it unset: the worst-case
/// frame time with 25 % guard.
pub fn auto_slot_duration(nodes: usize, bit_rate_bps: f64) -> f64 {
    1.25 * serialization_time_s(worst_case_frame_bytes(nodes), bit_rate_bps)
}

/// Pipeline TDMA: in slot `i` node `i` transmits and node `i + 1` receives.
pub fn schedule(
    topology: &Topology,
    slot_s: f64,
    bit_rate_bps: f64,
    round_index: u64,
) -> Result<Vec<SlotAssignment>, NodeError> {
    let nodes = topology.nodes();
    let frame_bytes = worst_case_frame_bytes(nodes.len());
    let needed_s = serialization_time_s(frame_bytes, bit_rate_bps);
    if slot_s.is_nan() || slot_s < needed_s {
        return Err(NodeError::SlotTooShort {
            slot_s,
            needed_s,
            frame_bytes,
        });
    }
    let hops = nodes.len() - 1;
    let mut out = Vec::with_capacity(2 * hops);
    for hop in 0..hops {
        let slot = round_index * hops as u64 + hop as u64;
        let start_s = slot as f64 * slot_s;
        let end_s = (slot + 1) as f64 * slot_s;
        out.push(SlotAssignment { node_id: nodes[hop].id, kind: SlotKind::Tx, start_s, end_s });
        out.push(SlotAssignment { node_id: nodes[hop + 1].id, kind: SlotKind::Rx, start_s, end_s });
    }
    Ok(out)
}
