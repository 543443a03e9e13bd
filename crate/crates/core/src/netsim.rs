//! Monte-Carlo simulation of the linear relay network.
//!
//! Each round drives the node machines through one pipeline schedule. The
//! bytes a node transmits cross the optical link bit by bit; any flipped
//! line bit loses the frame and ends the round. Every random draw comes
//! from a substream keyed by `(seed, turbidity, round, hop)`, so serial and
//! parallel execution produce identical reports.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    self, attenuate, minimize, ook_ber, Axis, ChannelError, ChannelParams, LinkSpec, SearchOptions,
    BITS_PER_BYTE,
};
use crate::frame::{AuthKey, Frame, DEFAULT_KEYS};
use crate::node::{
    auto_slot_duration, schedule, serialization_time_s, NodeAction, NodeError, NodeEvent, NodeRole,
    NodeState, SensorProfile, SlotKind,
};
use crate::rng::TrialRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("rounds must be >= 1")]
    NoRounds,
    #[error("turbidity list is empty")]
    NoTurbidities,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub id: u8,
    pub key: AuthKey,
    pub role: NodeRole,
}

/// Link geometry independent of the water it runs through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub distance_m: f64,
    pub extra_loss: f64,
}

impl Hop {
    pub fn link(&self, turbidity_ntu: f64) -> LinkSpec {
        LinkSpec::new(self.distance_m, turbidity_ntu).with_extra_loss(self.extra_loss)
    }
}

/// A line of nodes; hop `i` joins node `i` to node `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    hops: Vec<Hop>,
}

impl Topology {
    /// Roles are assigned by position: first originates, last sinks.
    pub fn new(nodes: Vec<(u8, AuthKey)>, hops: Vec<Hop>) -> Result<Self, SimError> {
        if nodes.len() < 2 {
            return Err(SimError::Topology("need at least two nodes".into()));
        }
        if hops.len() != nodes.len() - 1 {
            return Err(SimError::Topology(format!(
                "{} nodes need {} links, got {}",
                nodes.len(),
                nodes.len() - 1,
                hops.len()
            )));
        }
        for (i, (id, key)) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|(o, _)| o == id) {
                return Err(SimError::Topology(format!("duplicate node id {id}")));
            }
            if nodes[..i].iter().any(|(_, k)| k == key) {
                return Err(SimError::Topology(format!("duplicate key {key}")));
            }
            if *id == u8::MAX {
                return Err(SimError::Topology("node id 255 is reserved".into()));
            }
        }
        for hop in &hops {
            hop.link(0.0).validate()?;
        }
        let last = nodes.len() - 1;
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, (id, key))| NodeSpec {
                id,
                key,
                role: match i {
                    0 => NodeRole::Originator,
                    i if i == last => NodeRole::Sink,
                    _ => NodeRole::Relay,
                },
            })
            .collect();
        Ok(Self { nodes, hops })
    }

    /// `n` nodes with ids `0..n`, default keys, equal link lengths.
    pub fn uniform_line(n: usize, link_m: f64) -> Result<Self, SimError> {
        if n > DEFAULT_KEYS.len() {
            return Err(SimError::Topology(format!(
                "default keys cover {} nodes",
                DEFAULT_KEYS.len()
            )));
        }
        let nodes = (0..n)
            .map(|i| (i as u8, AuthKey::new(DEFAULT_KEYS[i]).expect("default keys valid")))
            .collect();
        let hops = vec![Hop { distance_m: link_m, extra_loss: 1.0 }; n.saturating_sub(1)];
        Self::new(nodes, hops)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn total_distance_m(&self) -> f64 {
        self.hops.iter().map(|h| h.distance_m).sum()
    }

    pub fn links(&self, turbidity_ntu: f64) -> Vec<LinkSpec> {
        self.hops.iter().map(|h| h.link(turbidity_ntu)).collect()
    }

    pub fn with_extra_loss(mut self, losses: &[f64]) -> Result<Self, SimError> {
        if losses.len() != self.hops.len() {
            return Err(SimError::Topology("one extra_loss per link".into()));
        }
        for (hop, &loss) in self.hops.iter_mut().zip(losses) {
            hop.extra_loss = loss;
        }
        for hop in &self.hops {
            hop.link(0.0).validate()?;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLayer {
    pub bit_rate_bps: f64,
    pub slot_s: f64,
}

impl LinkLayer {
    pub fn auto(topology: &Topology, bit_rate_bps: f64) -> Self {
        Self {
            bit_rate_bps,
            slot_s: auto_slot_duration(topology.nodes().len(), bit_rate_bps),
        }
    }
}

/// Everything a run needs besides its seed and round count.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub topology: Topology,
    pub channel: ChannelParams,
    pub turbidity_ntu: f64,
    pub link_layer: LinkLayer,
    pub sensor: SensorProfile,
}

impl Scenario {
    pub fn links(&self) -> Vec<LinkSpec> {
        self.topology.links(self.turbidity_ntu)
    }

    pub fn with_turbidity(&self, turbidity_ntu: f64) -> Self {
        Self {
            turbidity_ntu,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionPlan {
    #[default]
    Serial,
    /// Rounds split into chunks run on the rayon pool.
    Parallel { chunk_rounds: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopStats {
    /// 1-based.
    pub hop_index: usize,
    pub link_distance_m: f64,
    pub packets_attempted: u64,
    pub packets_delivered: u64,
    pub per_hop_psr: f64,
    pub cumulative_psr: f64,
    pub mean_rx_lux: f64,
    pub mean_frame_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrReport {
    pub label: String,
    pub turbidity_ntu: f64,
    pub rounds: u64,
    pub hops: Vec<HopStats>,
}

impl PsrReport {
    pub fn final_cumulative_psr(&self) -> f64 {
        self.hops.last().map_or(1.0, |h| h.cumulative_psr)
    }

    pub fn mean_frame_bytes(&self) -> Vec<f64> {
        self.hops.iter().map(|h| h.mean_frame_bytes).collect()
    }
}

/// A frame that reached the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub round: u64,
    pub at_s: f64,
    pub frame: Frame,
}

/// Flips each 8N1 line bit with probability `ber`. Only data-bit flips
/// change the returned bytes; start/stop-bit flips count as flips.
pub fn flip_bits<R: Rng + ?Sized>(bytes: &[u8], ber: f64, rng: &mut R) -> (Vec<u8>, u64) {
    let mut out = bytes.to_vec();
    let total = (bytes.len() * BITS_PER_BYTE) as u64;
    if ber <= 0.0 || total == 0 {
        return (out, 0);
    }
    if ber >= 1.0 {
        for b in &mut out {
            *b = !*b;
        }
        return (out, total);
    }
    // Gaps between flips are geometric, which keeps low-BER links cheap.
    let log_keep = (-ber).ln_1p();
    let gap = |rng: &mut R| -> u64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let g = (u.ln() / log_keep).floor();
        if g >= total as f64 {
            total
        } else {
            g as u64
        }
    };
    let mut flips = 0;
    let mut pos = gap(rng);
    while pos < total {
        flips += 1;
        let byte = (pos / BITS_PER_BYTE as u64) as usize;
        let bit = pos % BITS_PER_BYTE as u64;
        if (1..=8).contains(&bit) {
            out[byte] ^= 1 << (bit - 1);
        }
        pos = pos.saturating_add(1).saturating_add(gap(rng));
    }
    (out, flips)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub bytes: Vec<u8>,
    pub corrupted: bool,
    pub rx_lux: f64,
}

pub fn transmit_over_link<R: Rng + ?Sized>(
    bytes: &[u8],
    link: &LinkSpec,
    params: &ChannelParams,
    rng: &mut R,
) -> LinkOutcome {
    let rx_lux = attenuate(params, link);
    let (bytes, flips) = flip_bits(bytes, ook_ber(rx_lux, params), rng);
    LinkOutcome {
        bytes,
        corrupted: flips > 0,
        rx_lux,
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    attempted: Vec<u64>,
    delivered: Vec<u64>,
    frame_bytes: Vec<u64>,
    deliveries: Vec<Delivery>,
}

impl Tally {
    fn new(hops: usize) -> Self {
        Self {
            attempted: vec![0; hops],
            delivered: vec![0; hops],
            frame_bytes: vec![0; hops],
            deliveries: Vec::new(),
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for i in 0..self.attempted.len() {
            self.attempted[i] += other.attempted[i];
            self.delivered[i] += other.delivered[i];
            self.frame_bytes[i] += other.frame_bytes[i];
        }
        self.deliveries.extend(other.deliveries);
        self
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    /// `None` runs an error-free channel.
    channel: Option<&'a ChannelParams>,
    links: Vec<LinkSpec>,
    template: Vec<NodeState>,
    rng: TrialRng,
    collect: bool,
}

fn expect_step(state: &NodeState, event: &NodeEvent) -> (NodeState, Vec<NodeAction>) {
    state
        .step(event)
        .unwrap_or_else(|e| panic!("simulator issued an invalid event: {e}"))
}

impl Runner<'_> {
    fn round(&self, round: u64, tally: &mut Tally) {
        let ll = self.scenario.link_layer;
        let mut states = self.template.clone();
        let hops = self.links.len();
        for hop in 0..hops {
            // Slot boundaries from the global slot index so adjacent slots share exact endpoints.
            let slot = round * hops as u64 + hop as u64;
            let start = slot as f64 * ll.slot_s;
            let end = (slot + 1) as f64 * ll.slot_s;
            let (tx, tx_actions) = expect_step(&states[hop], &NodeEvent::SlotStart { kind: SlotKind::Tx, at: start });
            let (rx, _) = expect_step(&states[hop + 1], &NodeEvent::SlotStart { kind: SlotKind::Rx, at: start });
            let Some(bytes) = tx_actions.into_iter().find_map(|a| match a {
                NodeAction::TransmitBytes(b) => Some(b),
                _ => None,
            }) else {
                return;
            };
            tally.attempted[hop] += 1;
            tally.frame_bytes[hop] += bytes.len() as u64;
            let arrival = start + serialization_time_s(bytes.len(), ll.bit_rate_bps);
            let event = match self.channel {
                Some(params) => {
                    let mut rng = self.rng.substream(&[
                        self.scenario.turbidity_ntu.to_bits(),
                        round,
                        hop as u64,
                    ]);
                    let out = transmit_over_link(&bytes, &self.links[hop], params, &mut rng);
                    if out.corrupted {
                        NodeEvent::LineError { at: arrival }
                    } else {
                        NodeEvent::BytesArrived { at: arrival, bytes: out.bytes }
                    }
                }
                None => NodeEvent::BytesArrived { at: arrival, bytes },
            };
            let (rx, rx_actions) = expect_step(&rx, &event);
            let (tx, _) = expect_step(&tx, &NodeEvent::SlotEnd { at: end });
            let (rx, _) = expect_step(&rx, &NodeEvent::SlotEnd { at: end });
            let mut ok = rx.pending_frame.is_some();
            for action in rx_actions {
                if let NodeAction::DeliverToMonitor { frame, at } = action {
                    ok = true;
                    if self.collect {
                        tally.deliveries.push(Delivery { round, at_s: at, frame });
                    }
                }
            }
            states[hop] = tx;
            states[hop + 1] = rx;
            if !ok {
                return;
            }
            tally.delivered[hop] += 1;
        }
    }

    fn run(&self, rounds: u64, plan: ExecutionPlan) -> Tally {
        let hops = self.links.len();
        let chunk = |lo: u64, hi: u64| {
            let mut t = Tally::new(hops);
            for r in lo..hi {
                self.round(r, &mut t);
            }
            t
        };
        match plan {
            ExecutionPlan::Serial => chunk(0, rounds),
            ExecutionPlan::Parallel { chunk_rounds } => {
                let size = chunk_rounds.max(1) as u64;
                let chunks = rounds.div_ceil(size);
                (0..chunks)
                    .into_par_iter()
                    .map(|c| chunk(c * size, ((c + 1) * size).min(rounds)))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .fold(Tally::new(hops), Tally::merge)
            }
        }
    }
}

fn simulate(
    scenario: &Scenario,
    lossy: bool,
    rounds: u64,
    seed: u64,
    plan: ExecutionPlan,
    collect: bool,
) -> Result<(PsrReport, Vec<Delivery>), SimError> {
    if rounds == 0 {
        return Err(SimError::NoRounds);
    }
    scenario.channel.validate()?;
    let links = scenario.links();
    for link in &links {
        link.validate()?;
    }
    // Validates the slot length; per-round timing is computed inline.
    schedule(&scenario.topology, scenario.link_layer.slot_s, scenario.link_layer.bit_rate_bps, 0)?;

    let runner = Runner {
        scenario,
        channel: lossy.then_some(&scenario.channel),
        template: NodeState::for_topology(&scenario.topology, scenario.sensor),
        links,
        rng: TrialRng::new(seed),
        collect,
    };
    let tally = runner.run(rounds, plan);

    let hops = runner
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let attempted = tally.attempted[i];
            let delivered = tally.delivered[i];
            HopStats {
                hop_index: i + 1,
                link_distance_m: link.distance_m,
                packets_attempted: attempted,
                packets_delivered: delivered,
                per_hop_psr: if attempted == 0 { 0.0 } else { delivered as f64 / attempted as f64 },
                cumulative_psr: delivered as f64 / rounds as f64,
                mean_rx_lux: attenuate(&scenario.channel, link),
                mean_frame_bytes: if attempted == 0 {
                    0.0
                } else {
                    tally.frame_bytes[i] as f64 / attempted as f64
                },
            }
        })
        .collect();
    let report = PsrReport {
        label: scenario.label.clone(),
        turbidity_ntu: scenario.turbidity_ntu,
        rounds,
        hops,
    };
    Ok((report, tally.deliveries))
}

pub fn run_scenario(scenario: &Scenario, rounds: u64, seed: u64, plan: ExecutionPlan) -> Result<PsrReport, SimError> {
    simulate(scenario, true, rounds, seed, plan, false).map(|(r, _)| r)
}

/// Like [`run_scenario`], also returning every frame the sink delivered,
/// in round order.
pub fn run_monitored(
    scenario: &Scenario,
    rounds: u64,
    seed: u64,
    plan: ExecutionPlan,
) -> Result<(PsrReport, Vec<Delivery>), SimError> {
    simulate(scenario, true, rounds, seed, plan, true)
}

/// Error-free run. Its `mean_frame_bytes` are the frame lengths the lossy
/// simulator exposes to the channel.
pub fn run_lossless(scenario: &Scenario, rounds: u64) -> Result<PsrReport, SimError> {
    simulate(scenario, false, rounds, 0, ExecutionPlan::Serial, false).map(|(r, _)| r)
}

pub fn sweep(
    scenario: &Scenario,
    turbidities: &[f64],
    rounds: u64,
    seed: u64,
    plan: ExecutionPlan,
) -> Result<Vec<PsrReport>, SimError> {
    if turbidities.is_empty() {
        return Err(SimError::NoTurbidities);
    }
    turbidities
        .iter()
        .map(|&ntu| run_scenario(&scenario.with_turbidity(ntu), rounds, seed, plan))
        .collect()
}

/// Closed-form cumulative PSR per hop for the given per-hop frame lengths.
pub fn analytic_cumulative(scenario: &Scenario, frame_bytes: &[f64]) -> Vec<f64> {
    channel::cumulative_success(&scenario.channel, &scenario.links(), frame_bytes)
}

/// Half-width of a 3-standard-error band for a binomial proportion.
pub fn three_sigma(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousFit {
    pub scenario: Scenario,
    /// Model minus target per `(hop, psr)` target.
    pub residuals: Vec<f64>,
}

/// Fits the first link's `extra_loss` together with the receiver noise so
/// the closed-form cumulative PSR passes through `targets` (1-based hop,
/// PSR). Links other than the first keep their configured losses.
pub fn fit_heterogeneous(
    scenario: &Scenario,
    targets: &[(usize, f64)],
    frame_bytes: &[f64],
) -> Result<HeterogeneousFit, SimError> {
    let hops = scenario.topology.hop_count();
    if targets.len() < 2 || targets.iter().any(|&(h, p)| h == 0 || h > hops || !(0.0..=1.0).contains(&p)) {
        return Err(ChannelError::BadTargets("two or more (hop, psr) targets within the line").into());
    }
    let base_losses: Vec<f64> = scenario.topology.hops().iter().map(|h| h.extra_loss).collect();
    let build = |x: &[f64]| -> Scenario {
        let mut s = scenario.clone();
        let mut losses = base_losses.clone();
        losses[0] = x[0];
        s.topology = s.topology.clone().with_extra_loss(&losses).expect("loss axis stays in (0, 1]");
        s.channel.noise_sigma_lux = x[1];
        s
    };
    let residuals = |s: &Scenario| -> Vec<f64> {
        let cum = analytic_cumulative(s, frame_bytes);
        targets.iter().map(|&(h, p)| cum[h - 1] - p).collect()
    };
    let source = scenario.channel.source_lux;
    let axes = [Axis::linear(1e-3, 1.0), Axis::log(1e-4 * source, 10.0 * source)];
    let fit = minimize(
        |x| residuals(&build(x)).iter().map(|r| r * r).sum(),
        &axes,
        &SearchOptions::default(),
    );
    let fitted = build(&fit.point);
    let residuals = residuals(&fitted);
    if residuals.iter().any(|r| r.abs() > channel::CALIBRATION_TOLERANCE) {
        return Err(ChannelError::CalibrationDiverged {
            residuals,
            tolerance: channel::CALIBRATION_TOLERANCE,
        }
        .into());
    }
    Ok(HeterogeneousFit {
        scenario: fitted,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(channel: ChannelParams, turbidity_ntu: f64) -> Scenario {
        let topology = Topology::uniform_line(5, 4.0).unwrap();
        Scenario {
            label: "test".into(),
            link_layer: LinkLayer::auto(&topology, 9600.0),
            topology,
            channel,
            turbidity_ntu,
            sensor: SensorProfile::default(),
        }
    }

    fn noiseless() -> ChannelParams {
        ChannelParams { noise_sigma_lux: 1e-9, ..ChannelParams::default() }
    }

    #[test]
    fn topology_validation() {
        let k = |v| AuthKey::new(v).unwrap();
        let hop = Hop { distance_m: 4.0, extra_loss: 1.0 };
        assert!(Topology::new(vec![(0, k(1))], vec![]).is_err());
        assert!(Topology::new(vec![(0, k(1)), (1, k(2))], vec![]).is_err());
        assert!(Topology::new(vec![(0, k(1)), (0, k(2))], vec![hop]).is_err());
        assert!(Topology::new(vec![(0, k(1)), (1, k(1))], vec![hop]).is_err());
        let bad = Hop { distance_m: -4.0, extra_loss: 1.0 };
        assert!(Topology::new(vec![(0, k(1)), (1, k(2))], vec![bad]).is_err());
        let t = Topology::uniform_line(5, 4.0).unwrap();
        let roles: Vec<_> = t.nodes().iter().map(|n| n.role).collect();
        assert_eq!(
            roles,
            [NodeRole::Originator, NodeRole::Relay, NodeRole::Relay, NodeRole::Relay, NodeRole::Sink]
        );
        assert_eq!(t.total_distance_m(), 16.0);
    }

    #[test]
    fn noiseless_link_is_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bytes = vec![0x55; 64];
        let out = transmit_over_link(&bytes, &LinkSpec::new(4.0, 1.0), &noiseless(), &mut rng);
        assert!(!out.corrupted);
        assert_eq!(out.bytes, bytes);
    }

    #[test]
    fn dark_link_always_corrupts() {
        let far = LinkSpec::new(1e6, 0.0);
        let params = ChannelParams::default();
        assert_eq!(attenuate(&params, &far), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = [255u8, 80, 180, 1, 2, 3, 0];
        for _ in 0..10_000 {
            assert!(transmit_over_link(&frame, &far, &params, &mut rng).corrupted);
        }
    }

    #[test]
    fn flip_fraction_matches_ber() {
        let p = 0.01;
        let bytes = vec![0u8; 100_000];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, flips) = flip_bits(&bytes, p, &mut rng);
        let n = 1_000_000f64;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((flips as f64 / n - p).abs() < 3.0 * se, "flips {flips}");
    }

    #[test]
    fn data_bit_flips_change_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (out, flips) = flip_bits(&[0u8; 4], 1.0, &mut rng);
        assert_eq!(flips, 40);
        assert_eq!(out, vec![0xFF; 4]);
    }

    #[test]
    fn error_free_run_delivers_everything() {
        let report = run_scenario(&scenario(noiseless(), 0.01), 100, 9, ExecutionPlan::Serial).unwrap();
        assert_eq!(report.hops.len(), 4);
        for h in &report.hops {
            assert_eq!(h.per_hop_psr, 1.0);
            assert_eq!(h.cumulative_psr, 1.0);
            assert_eq!(h.packets_attempted, 100);
        }
        let bytes = report.mean_frame_bytes();
        assert!(bytes.windows(2).all(|w| w[1] > w[0]), "{bytes:?}");
    }

    #[test]
    fn conservation_and_order() {
        let noisy = ChannelParams { noise_sigma_lux: 150.0, ..ChannelParams::default() };
        let r = run_scenario(&scenario(noisy, 70.0), 2000, 11, ExecutionPlan::Serial).unwrap();
        assert_eq!(r.hops[0].packets_attempted, 2000);
        for w in r.hops.windows(2) {
            assert!(w[1].packets_attempted == w[0].packets_delivered);
            assert!(w[1].packets_delivered <= w[0].packets_delivered);
            assert!(w[1].cumulative_psr <= w[0].cumulative_psr);
        }
        assert!(r.final_cumulative_psr() < 1.0);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let noisy = ChannelParams { noise_sigma_lux: 120.0, ..ChannelParams::default() };
        let s = scenario(noisy, 30.0);
        let a = run_monitored(&s, 3000, 5, ExecutionPlan::Serial).unwrap();
        let b = run_monitored(&s, 3000, 5, ExecutionPlan::Parallel { chunk_rounds: 7 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_of_one_matches_scenario() {
        let s = scenario(ChannelParams::default(), 0.0);
        let one = sweep(&s, &[12.5], 500, 3, ExecutionPlan::Serial).unwrap();
        let direct = run_scenario(&s.with_turbidity(12.5), 500, 3, ExecutionPlan::Serial).unwrap();
        assert_eq!(one, vec![direct]);
        assert_eq!(sweep(&s, &[], 10, 3, ExecutionPlan::Serial), Err(SimError::NoTurbidities));
        assert_eq!(run_scenario(&s, 0, 3, ExecutionPlan::Serial), Err(SimError::NoRounds));
    }

    #[test]
    fn short_slot_propagates() {
        let mut s = scenario(ChannelParams::default(), 0.0);
        s.link_layer.slot_s = 1e-3;
        assert!(matches!(
            run_scenario(&s, 10, 1, ExecutionPlan::Serial),
            Err(SimError::Node(NodeError::SlotTooShort { .. }))
        ));
    }
}
