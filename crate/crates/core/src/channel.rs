//! Turbidity-dependent optical link model and its calibration.
//!
//! Received intensity follows Beer–Lambert decay with an attenuation
//! coefficient linear in turbidity, `c = c0 + kt * NTU`. The receiver sees
//! `ambient` for an off bit and `ambient + received` for an on bit, adds
//! Gaussian noise of RMS `noise_sigma`, and slices at the midpoint, so the
//! bit-error rate is `Q(received / (2 * noise_sigma))`. A packet survives
//! only if every one of its 8N1 line bits does.

use std::f64::consts::SQRT_2;

use thiserror::Error;

/// Line bits per byte under 8N1 serialization (start + 8 data + stop).
pub const BITS_PER_BYTE: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameter {field}: {constraint}")]
    InvalidParam {
        field: &'static str,
        constraint: &'static str,
    },
    #[error("calibration needs {0}")]
    BadTargets(&'static str),
    #[error("calibration did not reach tolerance {tolerance}: residuals {residuals:?}")]
    CalibrationDiverged { residuals: Vec<f64>, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Intensity at the transmitter aperture, lux.
    pub source_lux: f64,
    /// Clear-water attenuation, 1/m.
    pub c0_per_m: f64,
    /// Added attenuation per NTU, 1/(m·NTU).
    pub kt_per_m_ntu: f64,
    /// Background light. It offsets both OOK levels and cancels at the
    /// midpoint threshold.
    pub ambient_lux: f64,
    /// Receiver noise RMS, lux-equivalent.
    pub noise_sigma_lux: f64,
}

impl Default for ChannelParams {
    /// Values calibrated so a five-node, 4 m per hop line gives cumulative
    /// PSR 0.95 at 0.01 NTU and 0.89 at 70 NTU with the default sensor
    /// profile.
    fn default() -> Self {
        Self {
            source_lux: 1000.0,
            c0_per_m: DEFAULT_C0,
            kt_per_m_ntu: DEFAULT_KT,
            ambient_lux: 100.0,
            noise_sigma_lux: 75.0,
        }
    }
}

pub(crate) const DEFAULT_C0: f64 = 0.144_388_827_543_309_67;
pub(crate) const DEFAULT_KT: f64 = 0.000_207_821_517_033_721_9;

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let check = |ok: bool, field, constraint| {
            if ok {
                Ok(())
            } else {
                Err(ChannelError::InvalidParam { field, constraint })
            }
        };
        let s = self;
        check(s.source_lux.is_finite() && s.source_lux > 0.0, "source_lux", "must be finite and > 0")?;
        check(s.c0_per_m.is_finite() && s.c0_per_m >= 0.0, "c0_per_m", "must be finite and >= 0")?;
        check(
            s.kt_per_m_ntu.is_finite() && s.kt_per_m_ntu >= 0.0,
            "kt_per_m_ntu",
            "must be finite and >= 0",
        )?;
        check(
            (0.0..=10_000.0).contains(&s.ambient_lux),
            "ambient_lux",
            "must be in [0, 10000]",
        )?;
        check(
            s.noise_sigma_lux.is_finite() && s.noise_sigma_lux > 0.0,
            "noise_sigma_lux",
            "must be finite and > 0",
        )
    }

    pub fn attenuation_per_m(&self, turbidity_ntu: f64) -> f64 {
        self.c0_per_m + self.kt_per_m_ntu * turbidity_ntu
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub distance_m: f64,
    pub turbidity_ntu: f64,
    /// Multiplicative per-link loss in (0, 1].
    pub extra_loss: f64,
}

impl LinkSpec {
    pub fn new(distance_m: f64, turbidity_ntu: f64) -> Self {
        Self {
            distance_m,
            turbidity_ntu,
            extra_loss: 1.0,
        }
    }

    pub fn with_extra_loss(mut self, extra_loss: f64) -> Self {
        self.extra_loss = extra_loss;
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return Err(ChannelError::InvalidParam {
                field: "distance_m",
                constraint: "must be > 0",
            });
        }
        if !(self.turbidity_ntu.is_finite() && self.turbidity_ntu >= 0.0) {
            return Err(ChannelError::InvalidParam {
                field: "turbidity_ntu",
                constraint: "must be >= 0",
            });
        }
        if !(self.extra_loss > 0.0 && self.extra_loss <= 1.0) {
            return Err(ChannelError::InvalidParam {
                field: "extra_loss",
                constraint: "must be in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Received intensity in lux after the link.
pub fn attenuate(params: &ChannelParams, link: &LinkSpec) -> f64 {
    let c = params.attenuation_per_m(link.turbidity_ntu);
    params.source_lux * (-c * link.distance_m).exp() * link.extra_loss
}

/// Standard Gaussian upper tail, `P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Bit-error probability of midpoint-threshold OOK detection.
pub fn ook_ber(received_lux: f64, params: &ChannelParams) -> f64 {
    if received_lux <= 0.0 {
        return 0.5;
    }
    q_function(received_lux / (2.0 * params.noise_sigma_lux)).clamp(0.0, 0.5)
}

/// Probability that a `frame_bytes`-byte 8N1 frame crosses with no bit error.
pub fn packet_success(ber: f64, frame_bytes: usize) -> f64 {
    packet_success_mean(ber, frame_bytes as f64)
}

/// [`packet_success`] for a fractional (mean) frame length.
pub fn packet_success_mean(ber: f64, frame_bytes: f64) -> f64 {
    if ber >= 1.0 {
        return 0.0;
    }
    // ln_1p keeps precision for the tiny BERs of short clear-water links.
    ((BITS_PER_BYTE as f64) * frame_bytes * (-ber).ln_1p()).exp()
}

/// Closed-form per-hop success of a line of links, frame `i` crossing link `i`.
pub fn per_hop_success(params: &ChannelParams, links: &[LinkSpec], frame_bytes: &[f64]) -> Vec<f64> {
    links
        .iter()
        .zip(frame_bytes)
        .map(|(link, &bytes)| packet_success_mean(ook_ber(attenuate(params, link), params), bytes))
        .collect()
}

/// Closed-form cumulative PSR after each hop.
pub fn cumulative_success(params: &ChannelParams, links: &[LinkSpec], frame_bytes: &[f64]) -> Vec<f64> {
    per_hop_success(params, links, frame_bytes)
        .into_iter()
        .scan(1.0, |acc, p| {
            *acc *= p;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub turbidity_ntu: f64,
    /// End-to-end path length, split evenly over `hops` links.
    pub distance_m: f64,
    pub hops: usize,
    /// Target cumulative PSR after the last hop.
    pub psr: f64,
}

impl CalibrationTarget {
    pub fn links(&self) -> Vec<LinkSpec> {
        let d = self.distance_m / self.hops as f64;
        vec![LinkSpec::new(d, self.turbidity_ntu); self.hops]
    }

    pub fn model_psr(&self, params: &ChannelParams, frame_bytes: &[f64]) -> f64 {
        cumulative_success(params, &self.links(), frame_bytes)
            .last()
            .copied()
            .unwrap_or(1.0)
    }
}

/// End-to-end targets for a 16 m, four-hop line: 0.95 in clear water
/// (0.01 NTU) and 0.89 at 70 NTU.
pub fn reference_targets() -> Vec<CalibrationTarget> {
    vec![
        CalibrationTarget { turbidity_ntu: 0.01, distance_m: 16.0, hops: 4, psr: 0.95 },
        CalibrationTarget { turbidity_ntu: 70.0, distance_m: 16.0, hops: 4, psr: 0.89 },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreeParam {
    C0,
    Kt,
    NoiseSigma,
}

impl FreeParam {
    fn axis(self, base: &ChannelParams) -> Axis {
        match self {
            FreeParam::C0 => Axis::linear(0.0, 5.0),
            FreeParam::Kt => Axis::linear(0.0, 0.05),
            FreeParam::NoiseSigma => Axis::log(1e-4 * base.source_lux, 10.0 * base.source_lux),
        }
    }

    fn set(self, params: &mut ChannelParams, value: f64) {
        match self {
            FreeParam::C0 => params.c0_per_m = value,
            FreeParam::Kt => params.kt_per_m_ntu = value,
            FreeParam::NoiseSigma => params.noise_sigma_lux = value,
        }
    }
}

impl std::str::FromStr for FreeParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "c0" => Ok(FreeParam::C0),
            "kt" => Ok(FreeParam::Kt),
            "sigma" | "noise_sigma" => Ok(FreeParam::NoiseSigma),
            other => Err(format!("unknown free parameter {other:?} (expected c0, kt, sigma)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: ChannelParams,
    /// Model minus target, one per target.
    pub residuals: Vec<f64>,
    pub evaluations: usize,
}

/// Per-target tolerance on `|model - target|`.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

/// Fits the `free` parameters of `base` to the targets by least squares.
///
/// `frame_bytes[i]` is the (mean) encoded length of the frame crossing hop
/// `i`; it must cover the longest target.
pub fn calibrate(
    targets: &[CalibrationTarget],
    base: &ChannelParams,
    free: &[FreeParam],
    frame_bytes: &[f64],
) -> Result<Calibration, ChannelError> {
    if targets.is_empty() {
        return Err(ChannelError::BadTargets("at least one target"));
    }
    if free.is_empty() {
        return Err(ChannelError::BadTargets("at least one free parameter"));
    }
    if targets.len() < free.len() {
        return Err(ChannelError::BadTargets("no fewer targets than free parameters"));
    }
    for (i, t) in targets.iter().enumerate() {
        if targets[..i].iter().any(|o| o == t) {
            return Err(ChannelError::BadTargets("distinct targets"));
        }
    }
    if free.contains(&FreeParam::Kt) {
        let first = targets[0].turbidity_ntu;
        if targets.iter().all(|t| t.turbidity_ntu == first) {
            return Err(ChannelError::BadTargets("distinct turbidities to fit kt"));
        }
    }
    if targets.iter().any(|t| {
        t.hops == 0 || t.hops > frame_bytes.len() || !(0.0..=1.0).contains(&t.psr) || t.distance_m <= 0.0
    }) {
        return Err(ChannelError::BadTargets("hops within the frame table, psr in [0, 1], distance > 0"));
    }
    base.validate()?;

    let axes: Vec<Axis> = free.iter().map(|f| f.axis(base)).collect();
    let build = |x: &[f64]| {
        let mut p = *base;
        for (f, &v) in free.iter().zip(x) {
            f.set(&mut p, v);
        }
        p
    };
    let residuals = |p: &ChannelParams| -> Vec<f64> {
        targets.iter().map(|t| t.model_psr(p, frame_bytes) - t.psr).collect()
    };
    let fit = minimize(
        |x| residuals(&build(x)).iter().map(|r| r * r).sum(),
        &axes,
        &SearchOptions::default(),
    );
    let params = build(&fit.point);
    let residuals = residuals(&params);
    if residuals.iter().any(|r| r.abs() > CALIBRATION_TOLERANCE) {
        return Err(ChannelError::CalibrationDiverged {
            residuals,
            tolerance: CALIBRATION_TOLERANCE,
        });
    }
    Ok(Calibration {
        params,
        residuals,
        evaluations: fit.evaluations,
    })
}

/// Search box for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    /// Searched uniformly in `ln(value)`; bounds must be positive.
    pub fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: true }
    }

    fn value(&self, u: f64) -> f64 {
        if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub grid_points: usize,
    /// Compass descent restarts from this many of the best grid nodes.
    pub starts: usize,
    pub max_evaluations: usize,
    /// Stop once the compass step (in unit box coordinates) is this small.
    pub min_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_points: 41,
            starts: 4,
            max_evaluations: 200_000,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Deterministic bounded minimizer: exhaustive grid over the box, then
/// compass (coordinate) descent from the best grid node with step halving.
pub fn minimize(mut objective: impl FnMut(&[f64]) -> f64, axes: &[Axis], opts: &SearchOptions) -> SearchResult {
    let dims = axes.len();
    let n = opts.grid_points.max(2);
    let to_values = |u: &[f64]| -> Vec<f64> { u.iter().zip(axes).map(|(&u, a)| a.value(u)).collect() };
    let mut evaluations = 0;
    let mut eval = |u: &[f64], evaluations: &mut usize| -> f64 {
        *evaluations += 1;
        let v = objective(&to_values(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut nodes: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut index = vec![0usize; dims];
    'grid: loop {
        let u: Vec<f64> = index.iter().map(|&i| i as f64 / (n - 1) as f64).collect();
        let v = eval(&u, &mut evaluations);
        nodes.push((v, u));
        for i in index.iter_mut() {
            *i += 1;
            if *i < n {
                continue 'grid;
            }
            *i = 0;
        }
        break;
    }
    // Stable sort keeps grid order among ties, so the starts are deterministic.
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes.truncate(opts.starts.max(1));

    let budget = opts.max_evaluations / nodes.len();
    let mut best = nodes[0].1.clone();
    let mut best_value = nodes[0].0;
    for (start_value, start) in nodes {
        let (u, v) = compass(&mut eval, &mut evaluations, start, start_value, 1.0 / (n - 1) as f64, opts.min_step, budget);
        if v < best_value {
            best_value = v;
            best = u;
        }
    }

    SearchResult {
        point: to_values(&best),
        value: best_value,
        evaluations,
    }
}

fn compass(
    eval: &mut impl FnMut(&[f64], &mut usize) -> f64,
    evaluations: &mut usize,
    mut best: Vec<f64>,
    mut best_value: f64,
    initial_step: f64,
    min_step: f64,
    budget: usize,
) -> (Vec<f64>, f64) {
    let mut step = initial_step;
    let stop = *evaluations + budget;
    while step >= min_step && *evaluations < stop && best_value > 0.0 {
        let mut improved = false;
        for d in 0..best.len() {
            for dir in [1.0, -1.0] {
                let mut u = best.clone();
                u[d] = (u[d] + dir * step).clamp(0.0, 1.0);
                if u[d] == best[d] {
                    continue;
                }
                let v = eval(&u, evaluations);
                if v < best_value {
                    best_value = v;
                    best = u;
                    improved = true;
                    break;
                }
            }
        }
        // Grow after a successful sweep so long narrow valleys are walked
        // at a useful pace, shrink when no axis move helps.
        step = if improved { (step * 2.0).min(initial_step) } else { step * 0.5 };
    }
    (best, best_value)
}
