//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test -p uwoc --test acceptance`.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uwoc::channel::{
    attenuate, cumulative_success, ook_ber, packet_success_mean, reference_targets, ChannelParams, LinkSpec,
    CALIBRATION_TOLERANCE,
};
use uwoc::config::{parse_config, ScenarioConfig};
use uwoc::frame::{
    decode_frame, encode_frame, escape_payload, unescape_payload, AuthKey, Frame, FrameError, SensorRecord,
};
use uwoc::harness::{cmd_calibrate, cmd_sweep, frame_bytes_per_hop, CalibrateRequest};
use uwoc::netsim::{analytic_cumulative, run_monitored, run_scenario, three_sigma, ExecutionPlan, Scenario, Topology};
use uwoc::node::{NodeAction, NodeEvent, NodeState, Phase, SensorProfile, SlotKind};

const ROUNDS: u64 = 100_000;
const SEED: u64 = 7;
const PARALLEL: ExecutionPlan = ExecutionPlan::Parallel { chunk_rounds: 4096 };

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uncalibrated() -> ScenarioConfig {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/line5.cfg")).unwrap();
    let mut config = parse_config(&text).unwrap();
    config.channel.c0_per_m = 0.0;
    config.channel.kt_per_m_ntu = 0.0;
    config.targets = reference_targets();
    config
}

fn calibration(state: &mut Option<ScenarioConfig>) -> Outcome {
    let start = Instant::now();
    let outcome = cmd_calibrate(&uncalibrated(), &CalibrateRequest::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = outcome.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    *state = Some(outcome.config);
    check(
        worst <= CALIBRATION_TOLERANCE && secs < 10.0,
        format!("max |residual| {worst:.2e} (limit {CALIBRATION_TOLERANCE}), {secs:.2} s (limit 10 s)"),
    )
}

fn sweep_reproduction(config: &ScenarioConfig) -> Outcome {
    let start = Instant::now();
    let out = cmd_sweep(config, &[0.01, 70.0], ROUNDS, SEED, PARALLEL).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let got: Vec<f64> = out.reports.iter().map(|r| r.final_cumulative_psr()).collect();
    check(
        (got[0] - 0.95).abs() <= 0.01 && (got[1] - 0.89).abs() <= 0.01 && secs < 60.0,
        format!("0.01 NTU {:.4} (0.95 +/- 0.01), 70 NTU {:.4} (0.89 +/- 0.01), {secs:.2} s", got[0], got[1]),
    )
}

fn heterogeneous(config: &ScenarioConfig, scenarios: &mut Vec<Scenario>) -> Outcome {
    let request = CalibrateRequest {
        link_targets: vec![(1, 0.91), (4, 0.89)],
        turbidity: Some(70.0),
        ..CalibrateRequest::default()
    };
    let fitted = cmd_calibrate(config, &request).map_err(|e| e.to_string())?;
    let scenario = fitted.config.scenario(70.0);
    let report = run_scenario(&scenario, ROUNDS, SEED, PARALLEL).map_err(|e| e.to_string())?;
    scenarios.push(scenario);
    let h1 = report.hops[0].cumulative_psr;
    let h4 = report.hops[3].cumulative_psr;
    let losses: Vec<String> = fitted.config.topology.hops().iter().map(|h| format!("{:.4}", h.extra_loss)).collect();
    check(
        (h1 - 0.91).abs() <= 0.01 && (h4 - 0.89).abs() <= 0.01,
        format!("hop 1 {h1:.4} (0.91 +/- 0.01), hop 4 {h4:.4} (0.89 +/- 0.01), extra_loss [{}]", losses.join(", ")),
    )
}

fn analytic_agreement(config: &ScenarioConfig, scenarios: &[Scenario]) -> Outcome {
    let bytes = frame_bytes_per_hop(config).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut failures = String::new();
    for (i, s) in scenarios.iter().enumerate() {
        let report = run_scenario(s, ROUNDS, 1000 + i as u64, PARALLEL).map_err(|e| e.to_string())?;
        let model = analytic_cumulative(s, &bytes);
        for (h, m) in report.hops.iter().zip(&model) {
            let z = (h.cumulative_psr - m).abs() / (three_sigma(*m, ROUNDS) / 3.0);
            worst = worst.max(z);
            checked += 1;
            if z > 3.0 {
                let _ = write!(failures, " [{} NTU hop {}: {} vs {m}]", s.turbidity_ntu, h.hop_index, h.cumulative_psr);
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{} scenarios, {checked} hops, worst |z| {worst:.2} (limit 3){failures}", scenarios.len()),
    )
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    let n = rng.random_range(1..=10);
    let mut pool: Vec<u8> = (1..=254).collect();
    pool.shuffle(rng);
    let keys = pool[..n].iter().map(|&k| AuthKey::new(k).unwrap()).collect();
    let records = (0..rng.random_range(0..=n))
        .map(|_| {
            let raw: u16 = rng.random_range(0..=32_000);
            SensorRecord::new(rng.random_range(0..=254), f64::from(raw) / 256.0 - 40.0).unwrap()
        })
        .collect();
    Frame::new(keys, records).unwrap()
}

fn codec_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let frames: Vec<Frame> = (0..10_000).map(|_| random_frame(&mut rng)).collect();
    let mut round_trips = 0;
    let mut tampers = 0;
    let mut tamper_misses = 0;
    for (i, frame) in frames.iter().enumerate() {
        let bytes = encode_frame(frame).unwrap();
        if decode_frame(&bytes, frame.key_chain()).as_ref() == Ok(frame) {
            round_trips += 1;
        }
        for pos in 0..frame.key_chain().len() {
            // Exhaustive substitutions on a sample of frames, one per frame otherwise.
            let values: Vec<u8> = if i < 50 {
                (0..=255).collect()
            } else {
                vec![rng.random()]
            };
            for v in values.into_iter().filter(|&v| v != bytes[2 + pos]) {
                let mut t = bytes.clone();
                t[2 + pos] = v;
                tampers += 1;
                if !matches!(decode_frame(&t, frame.key_chain()), Err(FrameError::AuthMismatch { position, .. }) if position == pos) {
                    tamper_misses += 1;
                }
            }
        }
    }
    let every_byte: Vec<u8> = (0..=255).collect();
    let mut escapes = usize::from(unescape_payload(&escape_payload(&every_byte)).as_deref() == Ok(&every_byte[..]));
    escapes += (0..=255u8).filter(|&b| unescape_payload(&escape_payload(&[b])).as_deref() == Ok(&[b][..])).count();
    let mut random_escapes = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(0..64);
        let seq: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        if unescape_payload(&escape_payload(&seq)) == Ok(seq) {
            random_escapes += 1;
        }
    }
    check(
        round_trips == 10_000 && tamper_misses == 0 && escapes == 257 && random_escapes == 10_000,
        format!(
            "{round_trips}/10000 frames round-trip, {}/{tampers} key tampers rejected, {escapes}/257 byte-value and {random_escapes}/10000 random escape round-trips",
            tampers - tamper_misses
        ),
    )
}

fn role_safe_replay(rng: &mut ChaCha8Rng, node: &NodeState) -> bool {
    let mut state = node.clone();
    let mut clock = 0.0;
    for _ in 0..rng.random_range(1..80) {
        clock += rng.random_range(0.0..0.2);
        let event = match rng.random_range(0..5) {
            0 => NodeEvent::SlotStart { kind: SlotKind::Rx, at: clock },
            1 => NodeEvent::SlotStart { kind: SlotKind::Tx, at: clock },
            2 => NodeEvent::BytesArrived {
                at: clock,
                bytes: (0..rng.random_range(0..16)).map(|_| rng.random()).collect(),
            },
            3 => NodeEvent::LineError { at: clock },
            _ => NodeEvent::SlotEnd { at: clock },
        };
        let Ok((next, actions)) = state.step(&event) else { continue };
        let violated = match node.role {
            uwoc::node::NodeRole::Originator => {
                !next.rx_buffer.is_empty()
                    || next.phase == Phase::Receiving
                    || actions.iter().any(|a| matches!(a, NodeAction::DeliverToMonitor { .. }))
            }
            uwoc::node::NodeRole::Sink => {
                next.phase == Phase::Transmitting || actions.iter().any(|a| matches!(a, NodeAction::TransmitBytes(_)))
            }
            uwoc::node::NodeRole::Relay => false,
        };
        if violated {
            return false;
        }
        state = next;
    }
    true
}

fn relay_suite(config: &ScenarioConfig) -> Outcome {
    let mut scenario = config.scenario(0.01);
    scenario.channel.noise_sigma_lux = 1e-6;
    let rounds = 1_000;
    let (_, deliveries) = run_monitored(&scenario, rounds, SEED, ExecutionPlan::Serial).map_err(|e| e.to_string())?;
    let good = deliveries
        .iter()
        .filter(|d| {
            let keys: Vec<u8> = d.frame.key_chain().iter().map(|k| k.value()).collect();
            let ids: Vec<u8> = d.frame.records().iter().map(|r| r.node_id).collect();
            keys == [180, 170, 154, 140, 120] && ids == [0, 1, 2, 3, 4]
        })
        .count();
    let nodes = NodeState::for_topology(&Topology::uniform_line(5, 4.0).unwrap(), SensorProfile::default());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let logs = 2_000;
    let safe = (0..logs)
        .filter(|_| role_safe_replay(&mut rng, &nodes[0]) && role_safe_replay(&mut rng, &nodes[4]))
        .count();
    check(
        deliveries.len() as u64 == rounds && good as u64 == rounds && safe == logs,
        format!(
            "{good}/{rounds} delivered frames carry keys [180, 170, 154, 140, 120] and 5 records; {safe}/{logs} random log pairs role-safe"
        ),
    )
}

fn determinism(config: &ScenarioConfig) -> Outcome {
    let run = |plan| cmd_sweep(config, &config.turbidities, ROUNDS, SEED, plan).map(|o| o.csv);
    let a = run(ExecutionPlan::Serial).map_err(|e| e.to_string())?;
    let b = run(ExecutionPlan::Serial).map_err(|e| e.to_string())?;
    let c = run(PARALLEL).map_err(|e| e.to_string())?;
    let d = run(ExecutionPlan::Parallel { chunk_rounds: 777 }).map_err(|e| e.to_string())?;
    check(
        a == b && a == c && a == d,
        format!("serial x2, parallel (4096 and 777 round chunks): {} CSV bytes, identical = {}", a.len(), a == b && a == c && a == d),
    )
}

fn monotonicity(config: &ScenarioConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let params = config.channel;
    let bytes = frame_bytes_per_hop(config).map_err(|e| e.to_string())?;
    let psr = |p: &ChannelParams, links: &[LinkSpec], b: &[f64]| *cumulative_success(p, links, b).last().unwrap();
    let mut sorted = |lo: f64, hi: f64| {
        let mut g: Vec<f64> = (0..100).map(|_| rng.random_range(lo..hi)).collect();
        g.sort_by(f64::total_cmp);
        g
    };
    let turbidity = sorted(0.0, 300.0);
    let distance = sorted(0.1, 12.0);
    let length = sorted(1.0, 400.0);
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);

    let by_turbidity: Vec<f64> = turbidity.iter().map(|&t| psr(&params, &[LinkSpec::new(4.0, t); 4], &bytes)).collect();
    let by_distance: Vec<f64> = distance.iter().map(|&d| psr(&params, &[LinkSpec::new(d, 70.0); 4], &bytes)).collect();
    let by_length: Vec<f64> = length
        .iter()
        .map(|&n| packet_success_mean(ook_ber(attenuate(&params, &LinkSpec::new(4.0, 70.0)), &params), n))
        .collect();
    let mut hop_ok = 0;
    let hop_cases = 100;
    for _ in 0..hop_cases {
        let hops = rng.random_range(2..12);
        let links: Vec<LinkSpec> = (0..hops)
            .map(|_| LinkSpec::new(rng.random_range(0.5..8.0), rng.random_range(0.0..150.0)))
            .collect();
        let b: Vec<f64> = (0..hops).map(|i| 8.0 + 4.0 * i as f64).collect();
        if non_increasing(&cumulative_success(&params, &links, &b)) {
            hop_ok += 1;
        }
    }
    let (t, d, l) = (non_increasing(&by_turbidity), non_increasing(&by_distance), non_increasing(&by_length));
    check(
        t && d && l && hop_ok == hop_cases,
        format!(
            "turbidity {t}, distance {d}, frame length {l} (100 points each), cumulative over hops {hop_ok}/{hop_cases} lines"
        ),
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match &outcome {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(detail) => println!("FAIL  {name}: {detail}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let mut calibrated = None;
    let mut scenarios = Vec::new();
    let mut results = vec![run("calibration fit", || calibration(&mut calibrated))];
    let config = calibrated.unwrap_or_else(uncalibrated);
    scenarios.extend(config.turbidities.iter().map(|&t| config.scenario(t)));
    results.push(run("sweep reproduction", || sweep_reproduction(&config)));
    results.push(run("heterogeneous line", || heterogeneous(&config, &mut scenarios)));
    results.push(run("analytic agreement", || analytic_agreement(&config, &scenarios)));
    results.push(run("codec properties", codec_suite));
    results.push(run("relay invariants", || relay_suite(&config)));
    results.push(run("determinism", || determinism(&config)));
    results.push(run("monotonicity", || monotonicity(&config)));
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
