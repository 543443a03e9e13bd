//! Scenario files.
//!
//! Line-oriented `key = value` text. Blank lines and lines whose first
//! non-blank character is `#` are ignored. Keys are dotted
//! `section.field` names (a few top-level keys have no section). Lists are
//! comma separated. Every key may appear at most once; unknown keys are
//! rejected. See `docs/CONFIG-FORMAT.md` for the full key table.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::channel::{CalibrationTarget, ChannelParams, FreeParam};
use crate::frame::AuthKey;
use crate::netsim::{Hop, LinkLayer, Scenario, Topology};
use crate::node::{auto_slot_duration, schedule, SensorProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("{}invalid {field}: {constraint}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation {
        field: String,
        constraint: String,
        line: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotDuration {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub label: String,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub topology: Topology,
    pub channel: ChannelParams,
    pub bit_rate_bps: f64,
    pub rounds: u64,
    pub slot: SlotDuration,
    pub sensor: SensorProfile,
    pub turbidities: Vec<f64>,
    pub targets: Vec<CalibrationTarget>,
    pub free: Vec<FreeParam>,
}

pub const DEFAULT_ROUNDS: u64 = 100_000;
pub const DEFAULT_BIT_RATE: f64 = 9600.0;
pub const DEFAULT_TURBIDITIES: [f64; 2] = [0.01, 70.0];

impl ScenarioConfig {
    pub fn slot_s(&self) -> f64 {
        match self.slot {
            SlotDuration::Auto => auto_slot_duration(self.topology.nodes().len(), self.bit_rate_bps),
            SlotDuration::Fixed(s) => s,
        }
    }

    pub fn scenario(&self, turbidity_ntu: f64) -> Scenario {
        Scenario {
            label: self.label.clone(),
            topology: self.topology.clone(),
            channel: self.channel,
            turbidity_ntu,
            link_layer: LinkLayer {
                bit_rate_bps: self.bit_rate_bps,
                slot_s: self.slot_s(),
            },
            sensor: self.sensor,
        }
    }
}

const KEYS: &[&str] = &[
    "label",
    "seed",
    "output",
    "topology.nodes",
    "topology.link_distance_m",
    "topology.extra_loss",
    "channel.source_lux",
    "channel.c0_per_m",
    "channel.kt_per_m_ntu",
    "channel.ambient_lux",
    "channel.noise_sigma_lux",
    "channel.bit_rate_bps",
    "traffic.rounds",
    "traffic.slot_duration_s",
    "sensor.baseline_c",
    "sensor.amplitude_c",
    "sensor.period_s",
    "sensor.noise_std_c",
    "sensor.seed",
    "sweep.turbidity_ntu",
    "calibration.targets",
    "calibration.free",
];

struct Entries {
    values: Vec<Option<(usize, String)>>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let i = KEYS.iter().position(|k| *k == key).expect("key listed in KEYS");
        self.values[i].take()
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        reason: reason.into(),
    }
}

fn invalid(field: &str, constraint: impl Into<String>, line: Option<usize>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        constraint: constraint.into(),
        line,
    }
}

fn scalar<T: std::str::FromStr>(key: &str, line: usize, text: &str) -> Result<T, ConfigError> {
    text.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{key}: cannot parse {text:?}")))
}

fn finite(key: &str, line: usize, text: &str) -> Result<f64, ConfigError> {
    let v: f64 = scalar(key, line, text)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, "must be finite", Some(line)))
    }
}

fn list<T>(
    key: &str,
    line: usize,
    text: &str,
    item: impl Fn(&str) -> Result<T, ConfigError>,
) -> Result<Vec<T>, ConfigError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            let s = s.trim();
            if s.is_empty() {
                Err(parse_err(line, format!("{key}: empty list item")))
            } else {
                item(s)
            }
        })
        .collect()
}

/// Parses one `NTU:DISTANCE:HOPS:PSR` calibration target.
pub fn parse_target(text: &str) -> Result<CalibrationTarget, String> {
    let parts: Vec<&str> = text.trim().split(':').map(str::trim).collect();
    let [ntu, dist, hops, psr] = parts[..] else {
        return Err(format!("target {text:?} is not NTU:DISTANCE_M:HOPS:PSR"));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number {s:?} in target {text:?}"));
    let target = CalibrationTarget {
        turbidity_ntu: num(ntu)?,
        distance_m: num(dist)?,
        hops: hops.parse().map_err(|_| format!("bad hop count {hops:?} in target {text:?}"))?,
        psr: num(psr)?,
    };
    if !(target.turbidity_ntu.is_finite() && target.turbidity_ntu >= 0.0) {
        return Err(format!("target {text:?}: turbidity must be >= 0"));
    }
    if !(target.distance_m.is_finite() && target.distance_m > 0.0) {
        return Err(format!("target {text:?}: distance must be > 0"));
    }
    if target.hops == 0 {
        return Err(format!("target {text:?}: hops must be >= 1"));
    }
    if !(0.0..=1.0).contains(&target.psr) {
        return Err(format!("target {text:?}: psr must be in [0, 1]"));
    }
    Ok(target)
}

pub fn format_target(t: &CalibrationTarget) -> String {
    format!("{}:{}:{}:{}", t.turbidity_ntu, t.distance_m, t.hops, t.psr)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut entries = Entries {
        values: vec![None; KEYS.len()],
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(parse_err(line, "expected `key = value`"));
        };
        let key = key.trim();
        let Some(slot) = KEYS.iter().position(|k| *k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if entries.values[slot].is_some() {
            return Err(parse_err(line, format!("duplicate key {key:?}")));
        }
        entries.values[slot] = Some((line, value.trim().to_string()));
    }
    build(&mut entries)
}

fn build(e: &mut Entries) -> Result<ScenarioConfig, ConfigError> {
    let label = match e.take("label") {
        Some((line, v)) => {
            if v.is_empty() || v.contains([',', '"', '\r', '\n']) {
                return Err(invalid("label", "must be nonempty without commas or quotes", Some(line)));
            }
            v
        }
        None => "scenario".to_string(),
    };
    let seed = match e.take("seed") {
        Some((line, v)) => scalar("seed", line, &v)?,
        None => return Err(invalid("seed", "is required", None)),
    };
    let output = e.take("output").map(|(_, v)| PathBuf::from(v));

    let (nodes_line, nodes_text) = e
        .take("topology.nodes")
        .ok_or_else(|| invalid("topology.nodes", "is required", None))?;
    let nodes = list("topology.nodes", nodes_line, &nodes_text, |item| {
        let (id, key) = item
            .split_once(':')
            .ok_or_else(|| parse_err(nodes_line, format!("node {item:?} is not ID:KEY")))?;
        let id: u8 = scalar("topology.nodes", nodes_line, id)?;
        let key: u8 = scalar("topology.nodes", nodes_line, key)?;
        let key = AuthKey::new(key).map_err(|e| invalid("topology.nodes", e.to_string(), Some(nodes_line)))?;
        Ok((id, key))
    })?;
    let (dist_line, dist_text) = e
        .take("topology.link_distance_m")
        .ok_or_else(|| invalid("topology.link_distance_m", "is required", None))?;
    let distances = list("topology.link_distance_m", dist_line, &dist_text, |s| {
        finite("topology.link_distance_m", dist_line, s)
    })?;
    if let Some(d) = distances.iter().find(|d| **d <= 0.0) {
        return Err(invalid("distance", format!("must be > 0 (got {d})"), Some(dist_line)));
    }
    let losses = match e.take("topology.extra_loss") {
        Some((line, v)) => {
            let l = list("topology.extra_loss", line, &v, |s| finite("topology.extra_loss", line, s))?;
            if l.len() != distances.len() {
                return Err(invalid("topology.extra_loss", "needs one value per link", Some(line)));
            }
            if l.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
                return Err(invalid("extra_loss", "must be in (0, 1]", Some(line)));
            }
            l
        }
        None => vec![1.0; distances.len()],
    };
    let hops = distances
        .iter()
        .zip(&losses)
        .map(|(&distance_m, &extra_loss)| Hop { distance_m, extra_loss })
        .collect();
    let topology =
        Topology::new(nodes, hops).map_err(|err| invalid("topology", err.to_string(), Some(nodes_line)))?;

    let mut num = |key: &str, default: f64| -> Result<(f64, Option<usize>), ConfigError> {
        match e.take(key) {
            Some((line, v)) => Ok((finite(key, line, &v)?, Some(line))),
            None => Ok((default, None)),
        }
    };
    let defaults = ChannelParams::default();
    let channel_fields = [
        ("channel.source_lux", defaults.source_lux),
        ("channel.c0_per_m", defaults.c0_per_m),
        ("channel.kt_per_m_ntu", defaults.kt_per_m_ntu),
        ("channel.ambient_lux", defaults.ambient_lux),
        ("channel.noise_sigma_lux", defaults.noise_sigma_lux),
    ];
    let mut channel_values = [0.0; 5];
    let mut channel_lines = [None; 5];
    for (i, (key, default)) in channel_fields.iter().enumerate() {
        let (v, line) = num(key, *default)?;
        channel_values[i] = v;
        channel_lines[i] = line;
    }
    let channel = ChannelParams {
        source_lux: channel_values[0],
        c0_per_m: channel_values[1],
        kt_per_m_ntu: channel_values[2],
        ambient_lux: channel_values[3],
        noise_sigma_lux: channel_values[4],
    };
    if let Err(crate::channel::ChannelError::InvalidParam { field, constraint }) = channel.validate() {
        let i = channel_fields
            .iter()
            .position(|(k, _)| k.ends_with(field))
            .unwrap_or(0);
        return Err(invalid(channel_fields[i].0, constraint, channel_lines[i]));
    }
    let (bit_rate_bps, bit_line) = num("channel.bit_rate_bps", DEFAULT_BIT_RATE)?;
    if bit_rate_bps <= 0.0 {
        return Err(invalid("channel.bit_rate_bps", "must be > 0", bit_line));
    }

    let (baseline_c, _) = num("sensor.baseline_c", SensorProfile::default().baseline_c)?;
    let (amplitude_c, _) = num("sensor.amplitude_c", SensorProfile::default().amplitude_c)?;
    let (period_s, period_line) = num("sensor.period_s", SensorProfile::default().period_s)?;
    let (noise_std_c, noise_line) = num("sensor.noise_std_c", SensorProfile::default().noise_std_c)?;
    if period_s <= 0.0 {
        return Err(invalid("sensor.period_s", "must be > 0", period_line));
    }
    if noise_std_c < 0.0 {
        return Err(invalid("sensor.noise_std_c", "must be >= 0", noise_line));
    }
    let sensor_seed = match e.take("sensor.seed") {
        Some((line, v)) => scalar("sensor.seed", line, &v)?,
        None => SensorProfile::default().seed,
    };
    let sensor = SensorProfile {
        baseline_c,
        amplitude_c,
        period_s,
        noise_std_c,
        seed: sensor_seed,
    };

    let rounds = match e.take("traffic.rounds") {
        Some((line, v)) => {
            let r: u64 = scalar("traffic.rounds", line, &v)?;
            if r == 0 {
                return Err(invalid("traffic.rounds", "must be >= 1", Some(line)));
            }
            r
        }
        None => DEFAULT_ROUNDS,
    };
    let (slot, slot_line) = match e.take("traffic.slot_duration_s") {
        Some((line, v)) if v == "auto" => (SlotDuration::Auto, Some(line)),
        Some((line, v)) => {
            let s = finite("traffic.slot_duration_s", line, &v)?;
            if s <= 0.0 {
                return Err(invalid("traffic.slot_duration_s", "must be > 0", Some(line)));
            }
            (SlotDuration::Fixed(s), Some(line))
        }
        None => (SlotDuration::Auto, None),
    };

    let turbidities = match e.take("sweep.turbidity_ntu") {
        Some((line, v)) => {
            let t = list("sweep.turbidity_ntu", line, &v, |s| finite("sweep.turbidity_ntu", line, s))?;
            if t.is_empty() || t.iter().any(|x| *x < 0.0) {
                return Err(invalid("sweep.turbidity_ntu", "must be a nonempty list of values >= 0", Some(line)));
            }
            t
        }
        None => DEFAULT_TURBIDITIES.to_vec(),
    };
    let targets = match e.take("calibration.targets") {
        Some((line, v)) => list("calibration.targets", line, &v, |s| {
            parse_target(s).map_err(|r| invalid("calibration.targets", r, Some(line)))
        })?,
        None => Vec::new(),
    };
    let free = match e.take("calibration.free") {
        Some((line, v)) => {
            let f = list("calibration.free", line, &v, |s| {
                s.parse::<FreeParam>().map_err(|r| invalid("calibration.free", r, Some(line)))
            })?;
            if f.is_empty() {
                return Err(invalid("calibration.free", "must name at least one parameter", Some(line)));
            }
            f
        }
        None => vec![FreeParam::C0, FreeParam::Kt],
    };

    let config = ScenarioConfig {
        label,
        seed,
        output,
        topology,
        channel,
        bit_rate_bps,
        rounds,
        slot,
        sensor,
        turbidities,
        targets,
        free,
    };
    schedule(&config.topology, config.slot_s(), config.bit_rate_bps, 0)
        .map_err(|err| invalid("traffic.slot_duration_s", err.to_string(), slot_line))?;
    Ok(config)
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Renders every field explicitly; `parse_config` reads it back exactly.
pub fn emit_config(c: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        writeln!(out, "{k} = {v}").expect("writing to a String");
    };
    kv("label", c.label.clone());
    kv("seed", c.seed.to_string());
    if let Some(path) = &c.output {
        kv("output", path.display().to_string());
    }
    kv("topology.nodes", join(c.topology.nodes(), |n| format!("{}:{}", n.id, n.key)));
    kv("topology.link_distance_m", join(c.topology.hops(), |h| h.distance_m.to_string()));
    kv("topology.extra_loss", join(c.topology.hops(), |h| h.extra_loss.to_string()));
    kv("channel.source_lux", c.channel.source_lux.to_string());
    kv("channel.c0_per_m", c.channel.c0_per_m.to_string());
    kv("channel.kt_per_m_ntu", c.channel.kt_per_m_ntu.to_string());
    kv("channel.ambient_lux", c.channel.ambient_lux.to_string());
    kv("channel.noise_sigma_lux", c.channel.noise_sigma_lux.to_string());
    kv("channel.bit_rate_bps", c.bit_rate_bps.to_string());
    kv("traffic.rounds", c.rounds.to_string());
    kv(
        "traffic.slot_duration_s",
        match c.slot {
            SlotDuration::Auto => "auto".to_string(),
            SlotDuration::Fixed(s) => s.to_string(),
        },
    );
    kv("sensor.baseline_c", c.sensor.baseline_c.to_string());
    kv("sensor.amplitude_c", c.sensor.amplitude_c.to_string());
    kv("sensor.period_s", c.sensor.period_s.to_string());
    kv("sensor.noise_std_c", c.sensor.noise_std_c.to_string());
    kv("sensor.seed", c.sensor.seed.to_string());
    kv("sweep.turbidity_ntu", join(&c.turbidities, |t| t.to_string()));
    kv("calibration.targets", join(&c.targets, format_target));
    kv(
        "calibration.free",
        join(&c.free, |f| {
            match f {
                FreeParam::C0 => "c0",
                FreeParam::Kt => "kt",
                FreeParam::NoiseSigma => "sigma",
            }
            .to_string()
        }),
    );
    out
}
