//! TOML configuration files for control configurations and benchmark
//! variants.
//!
//! ```toml
//! schema = "alkspin-config/1"
//! preset = "cs-baseline"        # optional starting point
//! nuclear_spin = "7/2"          # required without a preset
//! rf_detuning = "0 kHz"
//! mw_detuning = "0 kHz"
//!
//! [[channel]]                   # replaces the preset's channels when present
//! kind = "microwave"            # rf_x | rf_y | microwave
//! transition = { m_minus = -3, m_plus = -4 }
//! max_rabi = "40 kHz"
//! slew_time = "1 us"
//! amplitude = "controlled"      # controlled | fixed-at-max | off
//! phase = "controlled"          # controlled | fixed
//! fixed_phase = 0.0             # rad, with phase = "fixed"
//! ```
//!
//! Frequencies carry explicit units (`Hz`, `kHz`, `MHz` are cyclic and get
//! the 2π factor; `rad/us` is taken as is). Durations accept `ns`, `us`,
//! `µs`, `ms`.

use std::f64::consts::PI;
use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::half::Half;
use crate::hamiltonians::{
    khz, mhz, AmplitudeMode, ChannelKind, ChannelSpec, ControlConfiguration, MicrowaveTransition, PhaseMode,
};
use crate::spin_algebra::SpinSystem;

pub const CONFIG_SCHEMA: &str = "alkspin-config/1";
pub const VARIANTS_SCHEMA: &str = "alkspin-variants/1";

/// Parses a frequency string into rad/µs.
pub fn parse_frequency(s: &str) -> Result<f64> {
    let (value, unit) = split_unit(s)?;
    match unit {
        "Hz" => Ok(2.0 * PI * value / 1e6),
        "kHz" => Ok(khz(value)),
        "MHz" => Ok(mhz(value)),
        "rad/us" | "rad/µs" => Ok(value),
        other => Err(Error::InvalidConfig(format!(
            "unknown frequency unit {other:?} in {s:?} (use Hz, kHz, MHz or rad/us)"
        ))),
    }
}

/// Parses a duration string into µs.
pub fn parse_duration(s: &str) -> Result<f64> {
    let (value, unit) = split_unit(s)?;
    let scale = match unit {
        "ns" => 1e-3,
        "us" | "µs" => 1.0,
        "ms" => 1e3,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown duration unit {other:?} in {s:?} (use ns, us or ms)"
            )))
        }
    };
    Ok(value * scale)
}

fn split_unit(s: &str) -> Result<(f64, &str)> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_whitespace() || (c.is_alphabetic() && c != 'e' && c != 'E') || c == 'µ')
        .ok_or_else(|| Error::InvalidConfig(format!("{s:?} has no unit")))?;
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse number in {s:?}")))?;
    if !value.is_finite() {
        return Err(Error::InvalidConfig(format!("{s:?} is not finite")));
    }
    Ok((value, unit.trim()))
}

/// Reads a configuration file, or a preset when `source` names one and no
/// such file exists.
pub fn load_config(source: &str) -> Result<ControlConfiguration> {
    let path = Path::new(source);
    if !path.exists() && ControlConfiguration::PRESETS.contains(&source) {
        return ControlConfiguration::preset(source);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ControlConfiguration> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
    check_schema(&table, CONFIG_SCHEMA)?;
    config_from_table(&table, "", &["schema"])
}

fn check_schema(table: &Table, expected: &str) -> Result<()> {
    match table.get("schema") {
        Some(Value::String(s)) if s == expected => Ok(()),
        Some(other) => Err(Error::InvalidConfig(format!(
            "key 'schema': expected \"{expected}\", found {other}"
        ))),
        None => Err(Error::InvalidConfig(format!("key 'schema': missing (expected \"{expected}\")"))),
    }
}

const CONFIG_KEYS: [&str; 5] = ["preset", "nuclear_spin", "rf_detuning", "mw_detuning", "channel"];
const CHANNEL_KEYS: [&str; 7] = [
    "kind",
    "transition",
    "max_rabi",
    "slew_time",
    "amplitude",
    "phase",
    "fixed_phase",
];

fn config_from_table(table: &Table, prefix: &str, extra: &[&str]) -> Result<ControlConfiguration> {
    let key = |k: &str| format!("{prefix}{k}");
    reject_unknown(table, prefix, &CONFIG_KEYS, extra)?;
    let base = match table.get("preset") {
        Some(v) => Some(ControlConfiguration::preset(as_str(v, &key("preset"))?).map_err(|e| {
            Error::InvalidConfig(format!("key '{}': {}", key("preset"), strip_prefix(e)))
        })?),
        None => None,
    };
    let system = match table.get("nuclear_spin") {
        Some(v) => {
            let spin = as_half(v, &key("nuclear_spin"))?;
            SpinSystem::new(spin)
                .map_err(|e| Error::InvalidConfig(format!("key '{}': {e}", key("nuclear_spin"))))?
        }
        None => match &base {
            Some(b) => b.system,
            None => {
                return Err(Error::InvalidConfig(format!(
                    "key '{}': required when no preset is given",
                    key("nuclear_spin")
                )))
            }
        },
    };
    let detuning = |name: &str, default: f64| -> Result<f64> {
        match table.get(name) {
            Some(v) => unit_value(v, &key(name), parse_frequency),
            None => Ok(default),
        }
    };
    let delta_rf = detuning("rf_detuning", base.as_ref().map_or(0.0, |b| b.delta_rf))?;
    let delta_mw = detuning("mw_detuning", base.as_ref().map_or(0.0, |b| b.delta_mw))?;
    let channels = match table.get("channel") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let ctx = format!("{prefix}channel[{i}]");
                match item {
                    Value::Table(t) => channel_from_table(t, &ctx),
                    _ => Err(Error::InvalidConfig(format!("key '{ctx}': expected a table"))),
                }
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => {
            return Err(Error::InvalidConfig(format!(
                "key '{}': expected an array of tables ([[channel]])",
                key("channel")
            )))
        }
        None => match &base {
            Some(b) => b.channels.clone(),
            None => {
                return Err(Error::InvalidConfig(format!(
                    "key '{}': at least one channel is required",
                    key("channel")
                )))
            }
        },
    };
    ControlConfiguration::new(system, channels, delta_rf, delta_mw)
        .map_err(|e| Error::InvalidConfig(format!("{prefix}{}", strip_prefix(e))))
}

fn channel_from_table(t: &Table, ctx: &str) -> Result<ChannelSpec> {
    let key = |k: &str| format!("{ctx}.{k}");
    reject_unknown(t, &format!("{ctx}."), &CHANNEL_KEYS, &[])?;
    let required = |k: &str| {
        t.get(k)
            .ok_or_else(|| Error::InvalidConfig(format!("key '{}': missing", key(k))))
    };
    let kind = match as_str(required("kind")?, &key("kind"))? {
        "rf_x" => ChannelKind::RfX,
        "rf_y" => ChannelKind::RfY,
        "microwave" | "mw" => {
            let tr = match required("transition")? {
                Value::Table(tr) => tr,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "key '{}': expected {{ m_minus = .., m_plus = .. }}",
                        key("transition")
                    )))
                }
            };
            reject_unknown(tr, &format!("{}.", key("transition")), &["m_minus", "m_plus"], &[])?;
            let m = |name: &str| -> Result<Half> {
                let full = format!("{}.{name}", key("transition"));
                let v = tr
                    .get(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("key '{full}': missing")))?;
                as_half(v, &full)
            };
            ChannelKind::Microwave(MicrowaveTransition::new(m("m_minus")?, m("m_plus")?))
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "key '{}': unknown channel kind {other:?} (rf_x, rf_y or microwave)",
                key("kind")
            )))
        }
    };
    if kind.is_rf() && t.contains_key("transition") {
        return Err(Error::InvalidConfig(format!(
            "key '{}': only microwave channels take a transition",
            key("transition")
        )));
    }
    let max_rabi = unit_value(required("max_rabi")?, &key("max_rabi"), parse_frequency)?;
    let slew_time = unit_value(required("slew_time")?, &key("slew_time"), parse_duration)?;
    let amplitude_mode = match t.get("amplitude") {
        None => AmplitudeMode::Controlled,
        Some(v) => match as_str(v, &key("amplitude"))? {
            "controlled" => AmplitudeMode::Controlled,
            "fixed-at-max" | "fixed" => AmplitudeMode::FixedAtMax,
            "off" => AmplitudeMode::Off,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "key '{}': unknown mode {other:?} (controlled, fixed-at-max or off)",
                    key("amplitude")
                )))
            }
        },
    };
    let fixed_phase = match t.get("fixed_phase") {
        None => None,
        Some(v) => Some(as_f64(v, &key("fixed_phase"))?),
    };
    let phase_mode = match t.get("phase").map(|v| as_str(v, &key("phase"))).transpose()? {
        None | Some("controlled") => {
            if fixed_phase.is_some() {
                return Err(Error::InvalidConfig(format!(
                    "key '{}': only valid with phase = \"fixed\"",
                    key("fixed_phase")
                )));
            }
            PhaseMode::Controlled
        }
        Some("fixed") => PhaseMode::Fixed(fixed_phase.unwrap_or(0.0)),
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "key '{}': unknown mode {other:?} (controlled or fixed)",
                key("phase")
            )))
        }
    };
    Ok(ChannelSpec::new(kind, max_rabi, slew_time)
        .with_amplitude(amplitude_mode)
        .with_phase(phase_mode))
}

fn reject_unknown(table: &Table, prefix: &str, known: &[&str], extra: &[&str]) -> Result<()> {
    for k in table.keys() {
        if !known.contains(&k.as_str()) && !extra.contains(&k.as_str()) {
            return Err(Error::InvalidConfig(format!("key '{prefix}{k}': unknown key")));
        }
    }
    Ok(())
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::InvalidConfig(m) => m,
        other => other.to_string(),
    }
}

fn as_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::InvalidConfig(format!("key '{key}': expected a string, found {v}")))
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(n) => Ok(*n as f64),
        _ => Err(Error::InvalidConfig(format!("key '{key}': expected a number, found {v}"))),
    }
}

fn as_half(v: &Value, key: &str) -> Result<Half> {
    let parsed = match v {
        Value::String(s) => s.parse::<Half>().ok(),
        Value::Integer(n) => i32::try_from(*n).ok().map(Half::integer),
        Value::Float(x) => Half::from_f64(*x),
        _ => None,
    };
    parsed.ok_or_else(|| Error::InvalidConfig(format!("key '{key}': expected a multiple of 1/2, found {v}")))
}

fn unit_value(v: &Value, key: &str, parse: fn(&str) -> Result<f64>) -> Result<f64> {
    let s = as_str(v, key)?;
    parse(s).map_err(|e| Error::InvalidConfig(format!("key '{key}': {}", strip_prefix(e))))
}

/// Renders a configuration as a config file that parses back to it.
pub fn to_toml(config: &ControlConfiguration) -> String {
    let mut out = format!(
        "schema = \"{CONFIG_SCHEMA}\"\nnuclear_spin = \"{}\"\nrf_detuning = \"{:?} rad/us\"\nmw_detuning = \"{:?} rad/us\"\n",
        config.system.nuclear_spin(),
        config.delta_rf,
        config.delta_mw
    );
    for ch in &config.channels {
        out.push_str("\n[[channel]]\n");
        match ch.kind {
            ChannelKind::RfX => out.push_str("kind = \"rf_x\"\n"),
            ChannelKind::RfY => out.push_str("kind = \"rf_y\"\n"),
            ChannelKind::Microwave(t) => out.push_str(&format!(
                "kind = \"microwave\"\ntransition = {{ m_minus = \"{}\", m_plus = \"{}\" }}\n",
                t.m_minus, t.m_plus
            )),
        }
        out.push_str(&format!("max_rabi = \"{:?} rad/us\"\n", ch.max_rabi));
        out.push_str(&format!("slew_time = \"{:?} us\"\n", ch.slew_time));
        let amp = match ch.amplitude_mode {
            AmplitudeMode::Controlled => "controlled",
            AmplitudeMode::FixedAtMax => "fixed-at-max",
            AmplitudeMode::Off => "off",
        };
        out.push_str(&format!("amplitude = \"{amp}\"\n"));
        match ch.phase_mode {
            PhaseMode::Controlled => out.push_str("phase = \"controlled\"\n"),
            PhaseMode::Fixed(p) => out.push_str(&format!("phase = \"fixed\"\nfixed_phase = {p:?}\n")),
        }
    }
    out
}

/// One named configuration in a benchmark variants file.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedVariant {
    pub name: String,
    pub config: ControlConfiguration,
}

/// Parses a variants file: `schema = "alkspin-variants/1"` followed by
/// `[[variant]]` tables, each holding `name` plus the keys of a config file.
pub fn parse_variants(text: &str) -> Result<Vec<NamedVariant>> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
    check_schema(&table, VARIANTS_SCHEMA)?;
    reject_unknown(&table, "", &["schema", "variant"], &[])?;
    let items = match table.get("variant") {
        Some(Value::Array(items)) if !items.is_empty() => items,
        _ => {
            return Err(Error::InvalidConfig(
                "key 'variant': expected at least one [[variant]] table".into(),
            ))
        }
    };
    let mut out: Vec<NamedVariant> = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let ctx = format!("variant[{i}]");
        let t = item
            .as_table()
            .ok_or_else(|| Error::InvalidConfig(format!("key '{ctx}': expected a table")))?;
        let name = as_str(
            t.get("name")
                .ok_or_else(|| Error::InvalidConfig(format!("key '{ctx}.name': missing")))?,
            &format!("{ctx}.name"),
        )?
        .to_string();
        if out.iter().any(|v| v.name == name) {
            return Err(Error::InvalidConfig(format!("key '{ctx}.name': duplicate name {name:?}")));
        }
        let config = config_from_table(t, &format!("{ctx}."), &["name"])?;
        out.push(NamedVariant { name, config });
    }
    Ok(out)
}

pub fn load_variants(path: &Path) -> Result<Vec<NamedVariant>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_variants(&text).map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = r#"
schema = "alkspin-config/1"
nuclear_spin = "7/2"

[[channel]]
kind = "rf_x"
max_rabi = "15 kHz"
slew_time = "10 us"

[[channel]]
kind = "rf_y"
max_rabi = "15 kHz"
slew_time = "10 us"

[[channel]]
kind = "microwave"
transition = { m_minus = -3, m_plus = -4 }
max_rabi = "40 kHz"
slew_time = "1 us"
"#;

    fn err(text: &str) -> String {
        parse_config(text).unwrap_err().to_string()
    }

    #[test]
    fn units() {
        assert!((parse_frequency("15 kHz").unwrap() - khz(15.0)).abs() < 1e-15);
        assert!((parse_frequency("1.5MHz").unwrap() - 2.0 * PI * 1.5).abs() < 1e-15);
        assert_eq!(parse_frequency("0.25 rad/us").unwrap(), 0.25);
        assert!((parse_frequency("1e3 Hz").unwrap() - khz(1.0)).abs() < 1e-15);
        assert_eq!(parse_duration("10 us").unwrap(), 10.0);
        assert_eq!(parse_duration("10µs").unwrap(), 10.0);
        assert_eq!(parse_duration("0.15 ms").unwrap(), 150.0);
        assert!(parse_frequency("15").is_err());
        assert!(parse_frequency("15 kHzz").is_err());
        assert!(parse_duration("3 s").is_err());
    }

    #[test]
    fn explicit_file_matches_preset() {
        assert_eq!(parse_config(BASELINE).unwrap(), ControlConfiguration::preset("cs-baseline").unwrap());
        let via_preset = parse_config("schema = \"alkspin-config/1\"\npreset = \"cs-baseline\"\n").unwrap();
        assert_eq!(via_preset, ControlConfiguration::preset("cs-baseline").unwrap());
    }

    #[test]
    fn preset_overrides() {
        let text = "schema = \"alkspin-config/1\"\npreset = \"cs-baseline\"\nrf_detuning = \"1.5 kHz\"\n";
        let c = parse_config(text).unwrap();
        assert!((c.delta_rf - khz(1.5)).abs() < 1e-15);
        assert_eq!(c.channels.len(), 3);
    }

    #[test]
    fn round_trip_through_toml() {
        for name in ControlConfiguration::PRESETS {
            let c = ControlConfiguration::preset(name).unwrap();
            assert_eq!(parse_config(&to_toml(&c)).unwrap(), c, "{name}");
        }
        let mut c = ControlConfiguration::preset("cs-baseline").unwrap();
        c.channels[0] = c.channels[0].with_phase(PhaseMode::Fixed(0.3));
        assert_eq!(parse_config(&to_toml(&c)).unwrap(), c);
    }

    #[test]
    fn diagnostics_name_the_key() {
        assert!(err("nuclear_spin = \"7/2\"").contains("'schema'"));
        assert!(err(&BASELINE.replace("\"40 kHz\"", "\"40 parsecs\"")).contains("channel[2].max_rabi"));
        assert!(err(&BASELINE.replace("m_plus = -4", "m_plus = -5")).contains("m_plus"));
        assert!(err(&BASELINE.replace("kind = \"rf_y\"", "kind = \"rf_z\"")).contains("channel[1].kind"));
        assert!(err(&BASELINE.replace("slew_time = \"1 us\"", "slew_time = \"1 us\"\ncolour = 3")).contains("channel[2].colour"));
        assert!(err(&BASELINE.replace("nuclear_spin = \"7/2\"", "")).contains("'nuclear_spin'"));
        assert!(err(&BASELINE.replace("max_rabi = \"15 kHz\"\nslew", "slew")).contains("channel[0].max_rabi': missing"));
        assert!(err("schema = \"alkspin-config/1\"\npreset = \"na-baseline\"").contains("'preset'"));
        assert!(err("schema = \"alkspin-config/1\"\nnuclear_spin = 1.3\n").contains("nuclear_spin"));
    }

    #[test]
    fn variants() {
        let text = r#"
schema = "alkspin-variants/1"
[[variant]]
name = "one-microwave"
preset = "cs-baseline"
[[variant]]
name = "two-microwave"
preset = "cs-two-microwave"
"#;
        let v = parse_variants(text).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].config.channels.len(), 4);
        let dup = text.replace("two-microwave\"", "one-microwave\"");
        assert!(parse_variants(&dup).unwrap_err().to_string().contains("variant[1].name"));
        let bad = text.replace("preset = \"cs-two-microwave\"", "preset = \"cs-two-microwave\"\nrf_detuning = 4");
        assert!(parse_variants(&bad).unwrap_err().to_string().contains("variant[1].rf_detuning"));
    }

    #[test]
    fn load_config_prefers_files_and_falls_back_to_presets() {
        assert_eq!(load_config("cs-rf-only").unwrap().channels.len(), 2);
        let missing = load_config("/nonexistent/alkspin.toml").unwrap_err().to_string();
        assert!(missing.contains("/nonexistent/alkspin.toml"));
    }
}
