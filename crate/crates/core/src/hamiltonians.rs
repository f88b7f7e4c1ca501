//! Rotating-frame control Hamiltonian `H'(t) = H'₀ + H'_rf(t) + H'_µw(t)`.
//!
//! Units: angular frequencies in rad/µs, times in µs. Frequencies quoted in
//! kHz are converted with [`khz`], which applies the factor 2π.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::half::Half;
use crate::linalg::{real, zeros, OperatorMatrix};
use crate::spin_algebra::{projected_operators, pseudospin, Manifold, SpinSystem};

/// Angular frequency in rad/µs for a linear frequency in kHz.
pub fn khz(f: f64) -> f64 {
    2.0 * PI * f / 1000.0
}

/// Angular frequency in rad/µs for a linear frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Inverse of [`khz`].
pub fn to_khz(omega: f64) -> f64 {
    omega * 1000.0 / (2.0 * PI)
}

/// Microwave coupling `|F₋, m₋⟩ ↔ |F₊, m₊⟩` with `|m₊ - m₋| ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MicrowaveTransition {
    pub m_minus: Half,
    pub m_plus: Half,
}

impl MicrowaveTransition {
    pub fn new(m_minus: Half, m_plus: Half) -> Self {
        MicrowaveTransition { m_minus, m_plus }
    }

    pub fn validate(&self, system: &SpinSystem) -> Result<()> {
        self.indices(system).map(|_| ())
    }

    /// Basis indices `(|F₊,m₊⟩, |F₋,m₋⟩)`.
    pub fn indices(&self, system: &SpinSystem) -> Result<(usize, usize)> {
        let err = |reason: &str| Error::InvalidTransition {
            m_minus: self.m_minus.to_string(),
            m_plus: self.m_plus.to_string(),
            reason: reason.to_string(),
        };
        if (self.m_plus - self.m_minus).abs() > Half::integer(1) {
            return Err(err("|m_plus - m_minus| must be at most 1"));
        }
        let up = system
            .index(Manifold::Plus, self.m_plus)
            .ok_or_else(|| err("m_plus outside the F+ manifold"))?;
        let down = system
            .index(Manifold::Minus, self.m_minus)
            .ok_or_else(|| err("m_minus outside the F- manifold"))?;
        Ok((up, down))
    }

    /// Every transition allowed by the selection rule, ordered by `m₋` then `m₊`.
    pub fn all(system: &SpinSystem) -> Vec<MicrowaveTransition> {
        let mut out = Vec::new();
        for m_minus in system.f_minus().projections().collect::<Vec<_>>().into_iter().rev() {
            for dm in [-1, 0, 1] {
                let t = MicrowaveTransition::new(m_minus, m_minus + Half::integer(dm));
                if t.validate(system).is_ok() {
                    out.push(t);
                }
            }
        }
        out
    }

    /// `|F₋,0⟩ ↔ |F₊,0⟩`.
    pub fn is_clock(&self) -> bool {
        self.m_minus == Half::ZERO && self.m_plus == Half::ZERO
    }
}

impl fmt::Display for MicrowaveTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.m_minus, self.m_plus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    RfX,
    RfY,
    Microwave(MicrowaveTransition),
}

impl ChannelKind {
    pub fn is_rf(&self) -> bool {
        matches!(self, ChannelKind::RfX | ChannelKind::RfY)
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::RfX => write!(f, "rf_x"),
            ChannelKind::RfY => write!(f, "rf_y"),
            ChannelKind::Microwave(t) => write!(f, "mw[{t}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    Controlled,
    FixedAtMax,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Controlled,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    /// Largest Rabi frequency, rad/µs.
    pub max_rabi: f64,
    pub amplitude_mode: AmplitudeMode,
    pub phase_mode: PhaseMode,
    /// Minimum time to traverse the full control range, µs.
    pub slew_time: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, max_rabi: f64, slew_time: f64) -> Self {
        ChannelSpec {
            kind,
            max_rabi,
            amplitude_mode: AmplitudeMode::Controlled,
            phase_mode: PhaseMode::Controlled,
            slew_time,
        }
    }

    pub fn with_amplitude(mut self, mode: AmplitudeMode) -> Self {
        self.amplitude_mode = mode;
        self
    }

    pub fn with_phase(mut self, mode: PhaseMode) -> Self {
        self.phase_mode = mode;
        self
    }

    /// True when the channel has at least one time-dependent parameter.
    pub fn is_time_dependent(&self) -> bool {
        self.amplitude_mode != AmplitudeMode::Off
            && (self.amplitude_mode == AmplitudeMode::Controlled
                || self.phase_mode == PhaseMode::Controlled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlConfiguration {
    pub system: SpinSystem,
    pub channels: Vec<ChannelSpec>,
    /// rf detuning `Δrf`, rad/µs.
    pub delta_rf: f64,
    /// Effective microwave detuning `Δµw`, rad/µs.
    pub delta_mw: f64,
}

impl ControlConfiguration {
    pub fn new(
        system: SpinSystem,
        channels: Vec<ChannelSpec>,
        delta_rf: f64,
        delta_mw: f64,
    ) -> Result<Self> {
        let config = ControlConfiguration {
            system,
            channels,
            delta_rf,
            delta_mw,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta_rf.is_finite() || !self.delta_mw.is_finite() {
            return Err(Error::InvalidConfig("detunings must be finite".into()));
        }
        let mut seen_x = false;
        let mut seen_y = false;
        let mut transitions = Vec::new();
        for (i, ch) in self.channels.iter().enumerate() {
            if !(ch.max_rabi > 0.0 && ch.max_rabi.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "channel {i} ({}): max_rabi must be positive",
                    ch.kind
                )));
            }
            if !(ch.slew_time > 0.0 && ch.slew_time.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "channel {i} ({}): slew_time must be positive",
                    ch.kind
                )));
            }
            if let PhaseMode::Fixed(p) = ch.phase_mode {
                if !p.is_finite() {
                    return Err(Error::InvalidConfig(format!("channel {i}: fixed phase is not finite")));
                }
            }
            match ch.kind {
                ChannelKind::RfX if seen_x => {
                    return Err(Error::InvalidConfig("more than one rf_x channel".into()))
                }
                ChannelKind::RfY if seen_y => {
                    return Err(Error::InvalidConfig("more than one rf_y channel".into()))
                }
                ChannelKind::RfX => seen_x = true,
                ChannelKind::RfY => seen_y = true,
                ChannelKind::Microwave(t) => {
                    t.validate(&self.system)?;
                    if transitions.contains(&t) {
                        return Err(Error::InvalidConfig(format!(
                            "duplicate microwave transition {t}"
                        )));
                    }
                    transitions.push(t);
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Smallest slew time over channels with knots.
    pub fn min_slew_time(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter(|c| c.is_time_dependent())
            .map(|c| c.slew_time)
            .reduce(f64::min)
    }

    pub fn max_slew_time(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter(|c| c.is_time_dependent())
            .map(|c| c.slew_time)
            .reduce(f64::max)
    }

    /// Named presets. `cs-baseline` holds the reference Cs operating point:
    /// rf 15 kHz on x and y with 10 µs slew, one 40 kHz microwave on
    /// `|3,-3⟩ ↔ |4,-4⟩` with 1 µs slew, all fields resonant.
    pub fn preset(name: &str) -> Result<Self> {
        let cs = SpinSystem::cesium();
        let rf = |kind| ChannelSpec::new(kind, khz(15.0), 10.0);
        let mw = |mm: i32, mp: i32| {
            ChannelSpec::new(
                ChannelKind::Microwave(MicrowaveTransition::new(Half::integer(mm), Half::integer(mp))),
                khz(40.0),
                1.0,
            )
        };
        let channels = match name {
            "cs-baseline" => vec![rf(ChannelKind::RfX), rf(ChannelKind::RfY), mw(-3, -4)],
            "cs-two-microwave" => vec![
                rf(ChannelKind::RfX),
                rf(ChannelKind::RfY),
                mw(-3, -4),
                mw(3, 4),
            ],
            "cs-mw-phase-only" => vec![
                rf(ChannelKind::RfX),
                rf(ChannelKind::RfY),
                mw(-3, -4).with_amplitude(AmplitudeMode::FixedAtMax),
            ],
            "cs-rf-only" => vec![rf(ChannelKind::RfX), rf(ChannelKind::RfY)],
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset {other:?} (known: {})",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        ControlConfiguration::new(cs, channels, 0.0, 0.0)
    }

    pub const PRESETS: [&'static str; 4] = [
        "cs-baseline",
        "cs-two-microwave",
        "cs-mw-phase-only",
        "cs-rf-only",
    ];
}

/// Instantaneous amplitude (rad/µs) and phase (rad) of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelValue {
    pub kind: ChannelKind,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSample {
    pub values: Vec<ChannelValue>,
}

impl ControlSample {
    /// Pairs `(amplitude, phase)` in the configuration's channel order.
    pub fn from_config(config: &ControlConfiguration, values: &[(f64, f64)]) -> Result<Self> {
        if values.len() != config.channels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} channel values for {} channels",
                values.len(),
                config.channels.len()
            )));
        }
        Ok(ControlSample {
            values: config
                .channels
                .iter()
                .zip(values)
                .map(|(ch, &(amplitude, phase))| ChannelValue {
                    kind: ch.kind,
                    amplitude,
                    phase,
                })
                .collect(),
        })
    }

    pub fn validate(&self, config: &ControlConfiguration) -> Result<()> {
        if self.values.len() != config.channels.len() {
            return Err(Error::InvalidArgument("sample/channel count mismatch".into()));
        }
        for (v, ch) in self.values.iter().zip(&config.channels) {
            if v.kind != ch.kind {
                return Err(Error::InvalidArgument(format!("sample kind {} != {}", v.kind, ch.kind)));
            }
            if !(0.0..=ch.max_rabi * (1.0 + 1e-12)).contains(&v.amplitude) {
                return Err(Error::InvalidArgument(format!(
                    "{}: amplitude {} outside [0, {}]",
                    ch.kind, v.amplitude, ch.max_rabi
                )));
            }
        }
        Ok(())
    }
}

/// Quadrature operators `(A, B)` of one channel: its Hamiltonian is
/// `Ω cos φ · A + Ω sin φ · B`.
pub fn channel_quadratures(
    system: &SpinSystem,
    kind: ChannelKind,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let half = real(0.5);
    Ok(match kind {
        ChannelKind::RfX => {
            let p = projected_operators(system);
            ((&p.fx_plus - &p.fx_minus) * half, (&p.fy_plus + &p.fy_minus) * half)
        }
        ChannelKind::RfY => {
            let p = projected_operators(system);
            ((&p.fy_plus - &p.fy_minus) * half, (&p.fx_plus + &p.fx_minus) * real(-0.5))
        }
        ChannelKind::Microwave(t) => {
            let ps = pseudospin(system, &t)?;
            (ps.sigma_x * half, ps.sigma_y * half)
        }
    })
}

/// `H'₀ = (Δµw/2)(P₊ - P₋) + Δrf (F_z⁺ - F_z⁻)`.
pub fn static_hamiltonian(config: &ControlConfiguration) -> OperatorMatrix {
    let p = projected_operators(&config.system);
    (&p.p_plus - &p.p_minus) * real(config.delta_mw / 2.0)
        + (&p.fz_plus - &p.fz_minus) * real(config.delta_rf)
}

fn add_channel(h: &mut OperatorMatrix, system: &SpinSystem, v: &ChannelValue) -> Result<()> {
    if v.amplitude == 0.0 {
        return Ok(());
    }
    let (a, b) = channel_quadratures(system, v.kind)?;
    *h += a * real(v.amplitude * v.phase.cos()) + b * real(v.amplitude * v.phase.sin());
    Ok(())
}

/// rf part of the rotating-frame Hamiltonian; channels other than rf are ignored.
pub fn rf_hamiltonian(system: &SpinSystem, sample: &ControlSample) -> OperatorMatrix {
    let mut h = zeros(system.dim());
    for v in sample.values.iter().filter(|v| v.kind.is_rf()) {
        add_channel(&mut h, system, v).expect("rf channels are always valid");
    }
    h
}

/// `(Ω/2) cos φ σx + (Ω/2) sin φ σy` for the sample entries driving `transition`.
pub fn microwave_hamiltonian(
    system: &SpinSystem,
    transition: &MicrowaveTransition,
    sample: &ControlSample,
) -> Result<OperatorMatrix> {
    transition.validate(system)?;
    let mut h = zeros(system.dim());
    for v in &sample.values {
        if v.kind == ChannelKind::Microwave(*transition) {
            add_channel(&mut h, system, v)?;
        }
    }
    Ok(h)
}

pub fn total_hamiltonian(config: &ControlConfiguration, sample: &ControlSample) -> Result<OperatorMatrix> {
    let mut h = static_hamiltonian(config);
    for v in &sample.values {
        add_channel(&mut h, &config.system, v)?;
    }
    Ok(h)
}
