//! Commands behind the `uwoc` binary, kept free of process and file I/O
//! so tests can drive them directly.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::channel::{self, CalibrationTarget, ChannelError, FreeParam};
use crate::config::{ConfigError, ScenarioConfig};
use crate::netsim::{self, ExecutionPlan, PsrReport, SimError};
use crate::report::{self, sig6};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Sim(SimError),
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Channel(ChannelError::BadTargets(what)) => {
                HarnessError::Usage(format!("calibration needs {what}"))
            }
            e => HarnessError::Sim(e),
        }
    }
}

impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        SimError::from(e).into()
    }
}

impl HarnessError {
    /// 1 for usage and configuration problems, 2 for simulation or
    /// calibration failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config(_) | HarnessError::Io { .. } => 1,
            HarnessError::Sim(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CalibrateRequest {
    /// End-to-end targets; falls back to the config's `calibration.targets`.
    pub targets: Vec<CalibrationTarget>,
    pub free: Option<Vec<FreeParam>>,
    /// `(hop, cumulative psr)` pairs; when set, fits the first link's
    /// extra loss and the receiver noise at `turbidity` instead.
    pub link_targets: Vec<(usize, f64)>,
    pub turbidity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CalibrateOutcome {
    pub config: ScenarioConfig,
    pub residuals: Vec<f64>,
    /// Human-readable per-target lines.
    pub summary: String,
}

/// Mean encoded frame length per hop over the configured rounds, from an
/// error-free pass.
pub fn frame_bytes_per_hop(config: &ScenarioConfig) -> Result<Vec<f64>, HarnessError> {
    Ok(netsim::run_lossless(&config.scenario(0.0), config.rounds)?.mean_frame_bytes())
}

pub fn cmd_calibrate(config: &ScenarioConfig, request: &CalibrateRequest) -> Result<CalibrateOutcome, HarnessError> {
    let frame_bytes = frame_bytes_per_hop(config)?;
    if !request.link_targets.is_empty() {
        return calibrate_links(config, request, &frame_bytes);
    }
    let targets = if request.targets.is_empty() {
        config.targets.clone()
    } else {
        request.targets.clone()
    };
    if targets.is_empty() {
        return Err(HarnessError::Usage(
            "no calibration targets (pass --target NTU:DISTANCE_M:HOPS:PSR or set calibration.targets)".into(),
        ));
    }
    let free = request.free.clone().unwrap_or_else(|| config.free.clone());
    if let Some(t) = targets.iter().find(|t| t.hops > config.topology.hop_count()) {
        return Err(HarnessError::Usage(format!(
            "target with {} hops exceeds the {}-hop topology",
            t.hops,
            config.topology.hop_count()
        )));
    }
    let fit = channel::calibrate(&targets, &config.channel, &free, &frame_bytes)?;

    let mut summary = String::new();
    for (t, r) in targets.iter().zip(&fit.residuals) {
        writeln!(
            summary,
            "target {} NTU {} m {} hops: model {} want {} residual {:+.3e}",
            sig6(t.turbidity_ntu),
            sig6(t.distance_m),
            t.hops,
            sig6(t.psr + r),
            sig6(t.psr),
            r
        )
        .expect("writing to a String");
    }
    writeln!(
        summary,
        "fitted c0_per_m = {} kt_per_m_ntu = {} noise_sigma_lux = {}",
        fit.params.c0_per_m, fit.params.kt_per_m_ntu, fit.params.noise_sigma_lux
    )
    .expect("writing to a String");

    let mut updated = config.clone();
    updated.channel = fit.params;
    updated.targets = targets;
    updated.free = free;
    Ok(CalibrateOutcome {
        config: updated,
        residuals: fit.residuals,
        summary,
    })
}

fn calibrate_links(
    config: &ScenarioConfig,
    request: &CalibrateRequest,
    frame_bytes: &[f64],
) -> Result<CalibrateOutcome, HarnessError> {
    let turbidity = request
        .turbidity
        .ok_or_else(|| HarnessError::Usage("link targets need exactly one --turbidity".into()))?;
    let fit = netsim::fit_heterogeneous(&config.scenario(turbidity), &request.link_targets, frame_bytes)?;
    let mut summary = String::new();
    for (&(hop, psr), r) in request.link_targets.iter().zip(&fit.residuals) {
        writeln!(
            summary,
            "target hop {hop} at {} NTU: model {} want {} residual {:+.3e}",
            sig6(turbidity),
            sig6(psr + r),
            sig6(psr),
            r
        )
        .expect("writing to a String");
    }
    let losses: Vec<String> = fit.scenario.topology.hops().iter().map(|h| h.extra_loss.to_string()).collect();
    writeln!(
        summary,
        "fitted extra_loss = {} noise_sigma_lux = {}",
        losses.join(", "),
        fit.scenario.channel.noise_sigma_lux
    )
    .expect("writing to a String");

    let mut updated = config.clone();
    updated.topology = fit.scenario.topology;
    updated.channel = fit.scenario.channel;
    updated.turbidities = vec![turbidity];
    Ok(CalibrateOutcome {
        config: updated,
        residuals: fit.residuals,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<PsrReport>,
    pub csv: String,
    pub summary: String,
}

pub fn cmd_sweep(
    config: &ScenarioConfig,
    turbidities: &[f64],
    rounds: u64,
    seed: u64,
    plan: ExecutionPlan,
) -> Result<SweepOutcome, HarnessError> {
    if turbidities.is_empty() {
        return Err(HarnessError::Usage("empty turbidity list".into()));
    }
    let reports = netsim::sweep(&config.scenario(turbidities[0]), turbidities, rounds, seed, plan)?;
    Ok(SweepOutcome {
        csv: report::write_csv(&reports),
        summary: report::summary(&reports),
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct MonitorOutcome {
    pub report: PsrReport,
    pub log: String,
}

pub fn cmd_monitor(
    config: &ScenarioConfig,
    turbidity: f64,
    rounds: u64,
    seed: u64,
    plan: ExecutionPlan,
) -> Result<MonitorOutcome, HarnessError> {
    let (report, deliveries) = netsim::run_monitored(&config.scenario(turbidity), rounds, seed, plan)?;
    Ok(MonitorOutcome {
        log: report::monitor_log(&deliveries),
        report,
    })
}

/// Parses `HOP:PSR, HOP:PSR, ...`.
pub fn parse_link_targets(text: &str) -> Result<Vec<(usize, f64)>, String> {
    text.split(',')
        .map(|item| {
            let (hop, psr) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("link target {item:?} is not HOP:PSR"))?;
            let hop = hop.trim().parse().map_err(|_| format!("bad hop in {item:?}"))?;
            let psr = psr.trim().parse().map_err(|_| format!("bad psr in {item:?}"))?;
            Ok((hop, psr))
        })
        .collect()
}

/// Parses a comma-separated turbidity list.
pub fn parse_turbidities(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            let v: f64 = s.trim().parse().map_err(|_| format!("bad turbidity {s:?}"))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(format!("turbidity {s:?} must be >= 0"))
            }
        })
        .collect()
}
