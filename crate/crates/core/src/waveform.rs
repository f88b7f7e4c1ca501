//! Knot-vector waveforms with bound and slew constraints, and their cubic
//! spline interpolation onto the integration grid.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    AmplitudeMode, ChannelSpec, ChannelValue, ControlConfiguration, ControlSample, PhaseMode,
};

/// Slack used when comparing times and constraint limits.
const TIME_EPS: f64 = 1e-9;
/// Lower end of the random amplitude draw, as a fraction of `max_rabi`.
pub const RANDOM_AMPLITUDE_FLOOR: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Amplitude,
    Phase,
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamKind::Amplitude => "amplitude",
            StreamKind::Phase => "phase",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelKnots {
    pub spec: ChannelSpec,
    pub knot_times: Vec<f64>,
    /// rad/µs; present only for amplitude-controlled channels.
    pub amplitude: Option<Vec<f64>>,
    /// Unwrapped radians; present only for phase-controlled channels.
    pub phase: Option<Vec<f64>>,
}

impl ChannelKnots {
    fn has_knots(&self) -> bool {
        self.amplitude.is_some() || self.phase.is_some()
    }

    /// Value of the channel's amplitude when it is not a knot stream.
    fn fixed_amplitude(&self) -> f64 {
        match self.spec.amplitude_mode {
            AmplitudeMode::FixedAtMax => self.spec.max_rabi,
            _ => 0.0,
        }
    }

    fn fixed_phase(&self) -> f64 {
        match self.spec.phase_mode {
            PhaseMode::Fixed(p) => p,
            PhaseMode::Controlled => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformKnots {
    pub total_time: f64,
    pub channels: Vec<ChannelKnots>,
}

/// Uniform knot grid covering `[0, T]` with spacing at least `slew`.
pub fn knot_times(total_time: f64, slew: f64) -> Result<Vec<f64>> {
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(Error::InvalidArgument(format!("total time {total_time} must be positive")));
    }
    let n = (total_time / slew + TIME_EPS).floor() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "total time {total_time} µs is shorter than the slew time {slew} µs"
        )));
    }
    let h = total_time / n as f64;
    Ok((0..=n).map(|i| if i == n { total_time } else { i as f64 * h }).collect())
}

fn streams_of(spec: &ChannelSpec) -> (bool, bool) {
    let live = spec.amplitude_mode != AmplitudeMode::Off;
    (
        live && spec.amplitude_mode == AmplitudeMode::Controlled,
        live && spec.phase_mode == PhaseMode::Controlled,
    )
}

impl WaveformKnots {
    /// Knots filled from `fill(channel, stream, knot)`.
    pub fn from_fn(
        config: &ControlConfiguration,
        total_time: f64,
        mut fill: impl FnMut(&ChannelSpec, StreamKind, usize) -> f64,
    ) -> Result<Self> {
        let mut channels = Vec::with_capacity(config.channels.len());
        for spec in &config.channels {
            let (amp, phase) = streams_of(spec);
            let times = if amp || phase {
                knot_times(total_time, spec.slew_time)?
            } else {
                Vec::new()
            };
            let n = times.len();
            let amplitude = amp.then(|| (0..n).map(|i| fill(spec, StreamKind::Amplitude, i)).collect());
            let phase = phase.then(|| (0..n).map(|i| fill(spec, StreamKind::Phase, i)).collect());
            channels.push(ChannelKnots {
                spec: *spec,
                knot_times: times,
                amplitude,
                phase,
            });
        }
        Ok(WaveformKnots {
            total_time,
            channels,
        })
    }

    /// Every stream held at a constant value.
    pub fn constant(config: &ControlConfiguration, total_time: f64, amplitude_fraction: f64, phase: f64) -> Result<Self> {
        Self::from_fn(config, total_time, |spec, kind, _| match kind {
            StreamKind::Amplitude => amplitude_fraction * spec.max_rabi,
            StreamKind::Phase => phase,
        })
    }

    pub fn random(config: &ControlConfiguration, total_time: f64, seed: u64) -> Result<Self> {
        random_knots(config, total_time, seed)
    }

    /// Free variables in stream order (channel, then amplitude before phase).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for ch in &self.channels {
            if let Some(a) = &ch.amplitude {
                out.extend_from_slice(a);
            }
            if let Some(p) = &ch.phase {
                out.extend_from_slice(p);
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidWaveform(format!(
                "{} values for {} knot variables",
                params.len(),
                self.param_count()
            )));
        }
        let mut k = 0;
        for ch in &mut self.channels {
            for stream in [&mut ch.amplitude, &mut ch.phase].into_iter().flatten() {
                let n = stream.len();
                stream.copy_from_slice(&params[k..k + n]);
                k += n;
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.streams().map(|s| s.len).sum()
    }

    /// Layout of the flattened parameter vector.
    pub fn streams(&self) -> impl Iterator<Item = StreamLayout> + '_ {
        let mut offset = 0;
        self.channels.iter().enumerate().flat_map(move |(c, ch)| {
            let mut v = Vec::new();
            for (kind, present) in [
                (StreamKind::Amplitude, ch.amplitude.is_some()),
                (StreamKind::Phase, ch.phase.is_some()),
            ] {
                if present {
                    let len = ch.knot_times.len();
                    v.push(StreamLayout {
                        channel: c,
                        kind,
                        offset,
                        len,
                    });
                    offset += len;
                }
            }
            v
        })
    }

    /// Checks that the knot layout fits `config` (same channels, same knot grid).
    pub fn check_against(&self, config: &ControlConfiguration) -> Result<()> {
        if self.channels.len() != config.channels.len() {
            return Err(Error::InvalidWaveform(format!(
                "waveform has {} channels, configuration has {}",
                self.channels.len(),
                config.channels.len()
            )));
        }
        let template = WaveformKnots::constant(config, self.total_time, 0.0, 0.0)?;
        for (i, (a, b)) in self.channels.iter().zip(&template.channels).enumerate() {
            if a.spec != b.spec {
                return Err(Error::InvalidWaveform(format!("channel {i} does not match the configuration")));
            }
            let same_grid = a.knot_times.len() == b.knot_times.len()
                && a.knot_times.iter().zip(&b.knot_times).all(|(x, y)| (x - y).abs() < 1e-6);
            if !same_grid
                || a.amplitude.is_some() != b.amplitude.is_some()
                || a.phase.is_some() != b.phase.is_some()
            {
                return Err(Error::InvalidWaveform(format!(
                    "channel {i} ({}) knot layout does not match the configuration",
                    a.spec.kind
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamLayout {
    pub channel: usize,
    pub kind: StreamKind,
    pub offset: usize,
    pub len: usize,
}

pub fn random_knots(config: &ControlConfiguration, total_time: f64, seed: u64) -> Result<WaveformKnots> {
    config.validate()?;
    for ch in config.channels.iter().filter(|c| c.is_time_dependent()) {
        if total_time + TIME_EPS < ch.slew_time {
            return Err(Error::InvalidArgument(format!(
                "total time {total_time} µs is shorter than the {} slew time {} µs",
                ch.kind, ch.slew_time
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut previous_phase = 0.0;
    WaveformKnots::from_fn(config, total_time, |spec, kind, i| match kind {
        StreamKind::Amplitude => rng.random_range(RANDOM_AMPLITUDE_FLOOR..=1.0) * spec.max_rabi,
        StreamKind::Phase => {
            // Draws in [0, 2π) are always within one full turn of each other;
            // the explicit window keeps the guarantee if the range changes.
            let mut p: f64 = rng.random_range(0.0..TAU);
            if i > 0 {
                p = p.clamp(previous_phase - TAU, previous_phase + TAU);
            }
            previous_phase = p;
            p
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Bound,
    Slew,
    NotFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub channel: usize,
    pub stream: StreamKind,
    pub knot: usize,
    pub kind: ViolationKind,
    /// Amount by which the limit is exceeded.
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::Bound => "bound",
            ViolationKind::Slew => "slew",
            ViolationKind::NotFinite => "non-finite value",
        };
        write!(
            f,
            "channel {} {} knot {}: {} violation by {:.3e}",
            self.channel, self.stream, self.knot, what, self.magnitude
        )
    }
}

/// Largest change allowed between adjacent knots: one full range per slew
/// interval, scaled up when the knot spacing exceeds the slew time.
fn slew_limit(range: f64, spacing: f64, slew: f64) -> f64 {
    range * (spacing / slew).max(1.0)
}

pub fn validate(knots: &WaveformKnots) -> Vec<Violation> {
    let mut out = Vec::new();
    for (c, ch) in knots.channels.iter().enumerate() {
        let spec = &ch.spec;
        let tol = 1e-12 * spec.max_rabi.max(1.0);
        let streams = [
            (StreamKind::Amplitude, ch.amplitude.as_ref(), spec.max_rabi),
            (StreamKind::Phase, ch.phase.as_ref(), TAU),
        ];
        for (kind, values, range) in streams {
            let Some(values) = values else { continue };
            for (i, &v) in values.iter().enumerate() {
                let push = |out: &mut Vec<Violation>, k, magnitude| {
                    out.push(Violation {
                        channel: c,
                        stream: kind,
                        knot: i,
                        kind: k,
                        magnitude,
                    })
                };
                if !v.is_finite() {
                    push(&mut out, ViolationKind::NotFinite, f64::INFINITY);
                    continue;
                }
                if kind == StreamKind::Amplitude {
                    if v < -tol {
                        push(&mut out, ViolationKind::Bound, -v);
                    } else if v > spec.max_rabi + tol {
                        push(&mut out, ViolationKind::Bound, v - spec.max_rabi);
                    }
                }
                if i > 0 && values[i - 1].is_finite() {
                    let spacing = ch.knot_times[i] - ch.knot_times[i - 1];
                    let limit = slew_limit(range, spacing, spec.slew_time);
                    let jump = (v - values[i - 1]).abs();
                    if jump > limit * (1.0 + 1e-12) + tol {
                        push(&mut out, ViolationKind::Slew, jump - limit);
                    }
                }
            }
        }
    }
    out
}

/// Projects knots onto the feasible set: amplitudes into `[0, max_rabi]`,
/// then each phase into the slew window of its predecessor.
pub fn project(knots: &mut WaveformKnots) {
    for ch in &mut knots.channels {
        let spec = ch.spec;
        if let Some(a) = &mut ch.amplitude {
            for v in a.iter_mut() {
                *v = v.clamp(0.0, spec.max_rabi);
            }
        }
        if let Some(p) = &mut ch.phase {
            for i in 1..p.len() {
                let spacing = ch.knot_times[i] - ch.knot_times[i - 1];
                let limit = slew_limit(TAU, spacing, spec.slew_time);
                p[i] = p[i].clamp(p[i - 1] - limit, p[i - 1] + limit);
            }
        }
    }
}

/// Linear map from knot values to natural-cubic-spline values at fixed times.
#[derive(Clone, Debug)]
pub struct SplineMap {
    /// `n_eval × n_knots`.
    pub weights: DMatrix<f64>,
}

impl SplineMap {
    pub fn new(knot_times: &[f64], eval_times: &[f64]) -> Result<Self> {
        let n = knot_times.len();
        if n < 2 {
            return Err(Error::InvalidWaveform("a spline needs at least two knots".into()));
        }
        let h: Vec<f64> = knot_times.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidWaveform("knot times must increase".into()));
        }
        // Second derivatives M = Q y with natural end conditions M₀ = M_{n-1} = 0.
        let mut q = DMatrix::<f64>::zeros(n, n);
        if n > 2 {
            let m = n - 2;
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut r = DMatrix::<f64>::zeros(m, n);
            for row in 0..m {
                let i = row + 1;
                if row > 0 {
                    a[(row, row - 1)] = h[i - 1];
                }
                a[(row, row)] = 2.0 * (h[i - 1] + h[i]);
                if row + 1 < m {
                    a[(row, row + 1)] = h[i];
                }
                r[(row, i - 1)] = 6.0 / h[i - 1];
                r[(row, i)] = -6.0 / h[i - 1] - 6.0 / h[i];
                r[(row, i + 1)] = 6.0 / h[i];
            }
            let interior = a
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::InvalidWaveform("singular spline system".into()))?;
            q.rows_mut(1, m).copy_from(&interior);
        }
        let mut weights = DMatrix::<f64>::zeros(eval_times.len(), n);
        for (row, &t) in eval_times.iter().enumerate() {
            let i = match knot_times.partition_point(|&x| x <= t) {
                0 => 0,
                p => (p - 1).min(n - 2),
            };
            let hi = h[i];
            let a = (knot_times[i + 1] - t) / hi;
            let b = 1.0 - a;
            let ca = (a * a * a - a) * hi * hi / 6.0;
            let cb = (b * b * b - b) * hi * hi / 6.0;
            let mut w = q.row(i) * ca + q.row(i + 1) * cb;
            w[i] += a;
            w[i + 1] += b;
            weights.row_mut(row).copy_from(&w);
        }
        Ok(SplineMap { weights })
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        (&self.weights * DVector::from_column_slice(values)).as_slice().to_vec()
    }

    /// Transpose map, used to pull gradients back onto knots.
    pub fn apply_transpose(&self, values: &[f64]) -> Vec<f64> {
        (self.weights.transpose() * DVector::from_column_slice(values)).as_slice().to_vec()
    }
}

pub fn resample(knots: &[f64], knot_times: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    Ok(SplineMap::new(knot_times, times)?.apply(knots))
}

/// Integration grid `0, dt, 2dt, …` ending exactly at `T`; the last
/// interval absorbs any remainder.
pub fn time_grid(total_time: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let n = (total_time / dt + TIME_EPS).floor() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} µs exceeds the total time {total_time} µs"
        )));
    }
    Ok((0..=n).map(|k| if k == n { total_time } else { k as f64 * dt }).collect())
}

/// Channel amplitudes and phases at the midpoints of the integration steps,
/// laid out `[step * n_channels + channel]`.
#[derive(Clone, Debug)]
pub struct MidpointControls {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    /// Set where the spline amplitude left `[0, max_rabi]` and was clamped.
    pub clamped: Vec<bool>,
}

/// Precomputed knot→midpoint maps for one knot layout and time step.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub grid: Vec<f64>,
    pub n_channels: usize,
    channels: Vec<ChannelSampler>,
}

#[derive(Clone, Debug)]
struct ChannelSampler {
    spec: ChannelSpec,
    fixed_amplitude: f64,
    fixed_phase: f64,
    map: Option<SplineMap>,
    amplitude: Option<usize>,
    phase: Option<usize>,
}

impl Sampler {
    pub fn new(template: &WaveformKnots, dt: f64) -> Result<Self> {
        let min_slew = template
            .channels
            .iter()
            .filter(|c| c.has_knots())
            .map(|c| c.spec.slew_time)
            .fold(f64::INFINITY, f64::min);
        if min_slew.is_finite() && dt > min_slew / 10.0 * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "time step {dt} µs is coarser than a tenth of the shortest slew time {min_slew} µs"
            )));
        }
        let grid = time_grid(template.total_time, dt)?;
        let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let layout: Vec<StreamLayout> = template.streams().collect();
        let mut channels = Vec::new();
        for (c, ch) in template.channels.iter().enumerate() {
            let find = |k| layout.iter().find(|s| s.channel == c && s.kind == k).map(|s| s.offset);
            channels.push(ChannelSampler {
                spec: ch.spec,
                fixed_amplitude: ch.fixed_amplitude(),
                fixed_phase: ch.fixed_phase(),
                map: if ch.has_knots() {
                    Some(SplineMap::new(&ch.knot_times, &mids)?)
                } else {
                    None
                },
                amplitude: find(StreamKind::Amplitude),
                phase: find(StreamKind::Phase),
            });
        }
        Ok(Sampler {
            grid,
            n_channels: template.channels.len(),
            channels,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn step_duration(&self, step: usize) -> f64 {
        self.grid[step + 1] - self.grid[step]
    }

    pub fn specs(&self) -> impl Iterator<Item = &ChannelSpec> {
        self.channels.iter().map(|c| &c.spec)
    }

    pub fn midpoints(&self, params: &[f64]) -> MidpointControls {
        let steps = self.n_steps();
        let nc = self.n_channels;
        let mut amplitude = vec![0.0; steps * nc];
        let mut phase = vec![0.0; steps * nc];
        let mut clamped = vec![false; steps * nc];
        for (c, ch) in self.channels.iter().enumerate() {
            let n_knots = ch.map.as_ref().map_or(0, |m| m.weights.ncols());
            let stream = |offset: Option<usize>| {
                offset.map(|o| ch.map.as_ref().unwrap().apply(&params[o..o + n_knots]))
            };
            let amps = stream(ch.amplitude);
            let phases = stream(ch.phase);
            for s in 0..steps {
                let k = s * nc + c;
                amplitude[k] = match &amps {
                    Some(a) => {
                        let v = a[s];
                        let cv = v.clamp(0.0, ch.spec.max_rabi);
                        clamped[k] = cv != v;
                        cv
                    }
                    None => ch.fixed_amplitude,
                };
                phase[k] = phases.as_ref().map_or(ch.fixed_phase, |p| p[s]);
            }
        }
        MidpointControls {
            amplitude,
            phase,
            clamped,
        }
    }

    /// Chains gradients with respect to midpoint amplitudes and phases back
    /// onto the knot variables. Clamped amplitudes carry zero derivative.
    pub fn pullback(&self, controls: &MidpointControls, d_amplitude: &[f64], d_phase: &[f64], n_params: usize) -> Vec<f64> {
        let steps = self.n_steps();
        let nc = self.n_channels;
        let mut out = vec![0.0; n_params];
        for (c, ch) in self.channels.iter().enumerate() {
            let Some(map) = &ch.map else { continue };
            let n_knots = map.weights.ncols();
            if let Some(o) = ch.amplitude {
                let g: Vec<f64> = (0..steps)
                    .map(|s| {
                        let k = s * nc + c;
                        if controls.clamped[k] {
                            0.0
                        } else {
                            d_amplitude[k]
                        }
                    })
                    .collect();
                out[o..o + n_knots].copy_from_slice(&map.apply_transpose(&g));
            }
            if let Some(o) = ch.phase {
                let g: Vec<f64> = (0..steps).map(|s| d_phase[s * nc + c]).collect();
                out[o..o + n_knots].copy_from_slice(&map.apply_transpose(&g));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SampledControls {
    pub dt: f64,
    /// Grid times `0, dt, …, T`.
    pub times: Vec<f64>,
    /// Controls at the grid times.
    pub samples: Vec<ControlSample>,
    /// Controls at the midpoint of each step; these drive propagation.
    pub midpoints: Vec<ControlSample>,
    /// Number of sample values clamped into the amplitude bounds.
    pub clamp_events: usize,
}

impl SampledControls {
    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.midpoints.len()
    }

    /// Piecewise-constant controls with one sample per step (grid samples
    /// repeat the following step's value).
    pub fn piecewise_constant(dt: f64, total_time: f64, steps: Vec<ControlSample>) -> Result<Self> {
        let times = time_grid(total_time, dt)?;
        if steps.len() != times.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} step samples for {} steps",
                steps.len(),
                times.len() - 1
            )));
        }
        let mut samples = steps.clone();
        samples.push(steps.last().cloned().unwrap_or_default());
        Ok(SampledControls {
            dt,
            times,
            samples,
            midpoints: steps,
            clamp_events: 0,
        })
    }
}

pub fn interpolate(knots: &WaveformKnots, dt: f64) -> Result<SampledControls> {
    let sampler = Sampler::new(knots, dt)?;
    let params = knots.params();
    let mids = sampler.midpoints(&params);
    let nc = sampler.n_channels;
    let to_samples = |amp: &[f64], phase: &[f64], count: usize| -> Vec<ControlSample> {
        (0..count)
            .map(|s| ControlSample {
                values: knots
                    .channels
                    .iter()
                    .enumerate()
                    .map(|(c, ch)| ChannelValue {
                        kind: ch.spec.kind,
                        amplitude: amp[s * nc + c],
                        phase: phase[s * nc + c],
                    })
                    .collect(),
            })
            .collect()
    };
    let midpoints = to_samples(&mids.amplitude, &mids.phase, sampler.n_steps());

    // Grid samples.
    let n_grid = sampler.grid.len();
    let mut amp = vec![0.0; n_grid * nc];
    let mut phase = vec![0.0; n_grid * nc];
    let mut clamp_events = mids.clamped.iter().filter(|&&c| c).count();
    for (c, ch) in knots.channels.iter().enumerate() {
        let amp_vals = match &ch.amplitude {
            Some(a) => Some(resample(a, &ch.knot_times, &sampler.grid)?),
            None => None,
        };
        let phase_vals = match &ch.phase {
            Some(p) => Some(resample(p, &ch.knot_times, &sampler.grid)?),
            None => None,
        };
        for s in 0..n_grid {
            let k = s * nc + c;
            amp[k] = match &amp_vals {
                Some(a) => {
                    let v = a[s].clamp(0.0, ch.spec.max_rabi);
                    clamp_events += usize::from(v != a[s]);
                    v
                }
                None => ch.fixed_amplitude(),
            };
            phase[k] = phase_vals.as_ref().map_or(ch.fixed_phase(), |p| p[s]);
        }
    }
    Ok(SampledControls {
        dt,
        times: sampler.grid.clone(),
        samples: to_samples(&amp, &phase, n_grid),
        midpoints,
        clamp_events,
    })
}

pub const WAVEFORM_HEADER: &str = "# alkspin-waveform v1";

fn stream_name(c: usize, spec: &ChannelSpec, kind: StreamKind) -> String {
    format!("ch{c}:{}:{kind}", spec.kind)
}

impl WaveformKnots {
    /// Comma-separated knot table: one row per distinct knot time, one
    /// column per stream, blank where a stream has no knot at that time.
    /// Amplitudes in rad/µs, phases in rad.
    pub fn to_csv(&self) -> Result<String> {
        let mut times: Vec<f64> = self.channels.iter().flat_map(|c| c.knot_times.iter().copied()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let layout: Vec<StreamLayout> = self.streams().collect();

        let mut out = format!("{WAVEFORM_HEADER}\n# total_time_us = {}\n", self.total_time);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["time_us".to_string()];
        header.extend(
            layout
                .iter()
                .map(|s| stream_name(s.channel, &self.channels[s.channel].spec, s.kind)),
        );
        w.write_record(&header).map_err(csv_err)?;
        for &t in &times {
            let mut row = vec![format!("{t}")];
            for s in &layout {
                let ch = &self.channels[s.channel];
                let values = match s.kind {
                    StreamKind::Amplitude => ch.amplitude.as_ref().unwrap(),
                    StreamKind::Phase => ch.phase.as_ref().unwrap(),
                };
                let cell = ch
                    .knot_times
                    .iter()
                    .position(|&x| (x - t).abs() < 1e-9)
                    .map(|i| format!("{:e}", values[i]))
                    .unwrap_or_default();
                row.push(cell);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::parse("waveform", e.to_string()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        Ok(out)
    }

    /// Parses a knot table written by [`WaveformKnots::to_csv`] for `config`.
    pub fn from_csv(text: &str, config: &ControlConfiguration) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(WAVEFORM_HEADER) {
            return Err(Error::parse("waveform", format!("missing header line {WAVEFORM_HEADER:?}")));
        }
        let total_time = text
            .lines()
            .filter_map(|l| l.strip_prefix("# total_time_us"))
            .filter_map(|rest| rest.trim().strip_prefix('=')?.trim().parse::<f64>().ok())
            .next()
            .ok_or_else(|| Error::parse("waveform", "missing total_time_us line"))?;
        let mut knots = WaveformKnots::constant(config, total_time, 0.0, 0.0)?;
        let layout: Vec<StreamLayout> = knots.streams().collect();

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_err)?.clone();
        let mut columns = Vec::new();
        for s in &layout {
            let name = stream_name(s.channel, &config.channels[s.channel], s.kind);
            let col = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse("waveform", format!("missing column {name:?}")))?;
            columns.push(col);
        }
        if header.len() != layout.len() + 1 {
            return Err(Error::parse(
                "waveform",
                format!("expected {} columns, found {}", layout.len() + 1, header.len()),
            ));
        }
        let mut params = vec![f64::NAN; knots.param_count()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let t: f64 = record
                .get(0)
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::parse("waveform", format!("row {}: bad time", line + 1)))?;
            for (s, &col) in layout.iter().zip(&columns) {
                let cell = record.get(col).unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::parse("waveform", format!("row {}: bad value {cell:?}", line + 1)))?;
                let times = &knots.channels[s.channel].knot_times;
                let i = times.iter().position(|&x| (x - t).abs() < 1e-6).ok_or_else(|| {
                    Error::InvalidWaveform(format!("row {}: time {t} is not a knot of stream {}", line + 1, s.offset))
                })?;
                params[s.offset + i] = v;
            }
        }
        if let Some(missing) = params.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidWaveform(format!("knot variable {missing} missing from file")));
        }
        knots.set_params(&params)?;
        Ok(knots)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("waveform", e.to_string())
}
