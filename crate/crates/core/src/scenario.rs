//! Scenario files: plain-text key/value configuration for a full
//! magnetometer description.
//!
//! A scenario is a set of `[section]` blocks of `key = value` lines. Values
//! are numbers with optional SI unit suffixes (us, uT, kHz, um, %, ...), so
//! parameter tables can be transcribed verbatim. Protocol blocks are named
//! (`[protocol.fcm]`), and omitted keys fall back to the Ramsey defaults.
//! Three scenarios ship with the crate: `table_s1.cfg`,
//! `table_s3_present.cfg`, and `table_s3_improved.cfg`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::consts::PhysicalConstants;
use crate::dsp::{DriftModel, Tone};
use crate::error::{Error, Result};
use crate::fluxmod::ModulationDrive;
use crate::inhomogeneity::DispersionParams;
use crate::params::{validate_params, ProtocolParams};
use crate::photon::OpticalParams;

/// File names of the scenarios bundled into the library.
pub const BUNDLED_SCENARIOS: [&str; 3] = [
    "table_s1.cfg",
    "table_s3_present.cfg",
    "table_s3_improved.cfg",
];

/// Mechanical modulation block.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModulationBlock {
    /// Modulation frequency, Hz.
    pub f_mod: f64,
    /// Oscillation amplitude, m.
    pub amplitude: f64,
    /// Equilibrium chip height, m.
    pub h_eq: f64,
    /// Programmed phase, rad.
    pub phase: f64,
}

impl Default for ModulationBlock {
    fn default() -> Self {
        ModulationBlock {
            f_mod: 10795.0,
            amplitude: 3e-6,
            h_eq: 3e-6,
            phase: 0.0,
        }
    }
}

impl ModulationBlock {
    pub fn drive(&self) -> Result<ModulationDrive> {
        Ok(ModulationDrive::new(self.f_mod, self.amplitude, self.h_eq)?.with_phase(self.phase))
    }
}

/// Acquisition and synthesis block.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DspBlock {
    /// Sampling rate, Hz.
    pub fs: f64,
    /// Record duration, s.
    pub duration: f64,
    /// Target white-noise floor, T/sqrt(Hz).
    pub floor: f64,
    /// Injected tones.
    pub tones: Vec<Tone>,
    /// Optional 1/f drift corner.
    pub drift: Option<DriftModel>,
}

impl Default for DspBlock {
    fn default() -> Self {
        DspBlock {
            fs: 1.15,
            duration: 3600.0,
            floor: 32e-12,
            tones: vec![Tone::new(0.1, 12e-9)],
            drift: None,
        }
    }
}

/// A protocol parameter set together with its scenario name.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NamedProtocol {
    pub name: String,
    pub params: ProtocolParams,
}

/// A complete scenario: named protocol parameter sets plus the modulation,
/// optical, dispersion, and acquisition blocks (all defaulted when absent).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScenarioConfig {
    pub protocols: Vec<NamedProtocol>,
    pub modulation: ModulationBlock,
    pub optical: OpticalParams,
    pub dispersion: DispersionParams,
    pub dsp: DspBlock,
}

impl ScenarioConfig {
    /// Loads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::domain(format!("file not found: {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Self::parse(&text)
    }

    /// Loads one of the bundled scenarios by file name (the `.cfg` suffix is
    /// optional).
    pub fn load_bundled(name: &str) -> Result<Self> {
        let full = if name.ends_with(".cfg") {
            name.to_string()
        } else {
            format!("{name}.cfg")
        };
        let text = match full.as_str() {
            "table_s1.cfg" => include_str!("../scenarios/table_s1.cfg"),
            "table_s3_present.cfg" => include_str!("../scenarios/table_s3_present.cfg"),
            "table_s3_improved.cfg" => include_str!("../scenarios/table_s3_improved.cfg"),
            _ => {
                return Err(Error::domain(format!(
                    "unknown bundled scenario {name:?}; available: {}",
                    BUNDLED_SCENARIOS.join(", ")
                )))
            }
        };
        Self::parse(text)
    }

    /// Resolves a CLI-style reference: an existing file path wins, otherwise
    /// the name is tried against the bundled scenarios.
    pub fn resolve(reference: &str) -> Result<Self> {
        let path = Path::new(reference);
        if path.exists() {
            Self::load(path)
        } else if BUNDLED_SCENARIOS.contains(&reference)
            || BUNDLED_SCENARIOS.contains(&format!("{reference}.cfg").as_str())
        {
            Self::load_bundled(reference)
        } else {
            Err(Error::domain(format!("file not found: {reference}")))
        }
    }

    /// Parses scenario text. Defaults fill every omitted key; the result is
    /// fully validated.
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawScenario::parse(text)?;
        raw.build()
    }

    /// Looks up a protocol block by name.
    pub fn protocol(&self, name: &str) -> Option<&ProtocolParams> {
        self.protocols
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.params)
    }

    /// Serializes to scenario text that reparses to an identical config.
    /// Values are written in plain SI units.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for p in &self.protocols {
            let _ = writeln!(out, "[protocol.{}]", p.name);
            let pp = &p.params;
            let _ = writeln!(out, "A = {}", pp.a_coeff);
            let _ = writeln!(out, "G = {}", pp.magnification);
            let _ = writeln!(out, "alpha = {}", pp.angle_factor);
            let _ = writeln!(out, "E_F = {}", pp.mod_efficiency);
            let _ = writeln!(out, "C = {}", pp.contrast);
            let _ = writeln!(out, "N = {}", pp.photons);
            let _ = writeln!(out, "T_coh = {}", pp.coherence_time);
            let _ = writeln!(out, "p = {}", pp.stretch_exp);
            let _ = writeln!(out, "tau = {}", pp.evolution_time);
            let _ = writeln!(out, "t_m = {}", pp.overhead_time);
            let _ = writeln!(out, "n_f = {}", pp.noise_ratio);
            let _ = writeln!(out, "delta_ms = {}", pp.delta_ms);
            let _ = writeln!(out);
        }
        let m = &self.modulation;
        let _ = writeln!(out, "[modulation]");
        let _ = writeln!(out, "f_mod = {}", m.f_mod);
        let _ = writeln!(out, "amplitude = {}", m.amplitude);
        let _ = writeln!(out, "h_eq = {}", m.h_eq);
        let _ = writeln!(out, "phase = {}", m.phase);
        let _ = writeln!(out);
        let o = &self.optical;
        let _ = writeln!(out, "[optical]");
        let _ = writeln!(out, "laser_power = {}", o.laser_power);
        let _ = writeln!(out, "spot_radius = {}", o.spot_radius);
        let _ = writeln!(out, "spot_area = {}", o.spot_area);
        let _ = writeln!(out, "saturation_intensity = {}", o.saturation_intensity);
        let _ = writeln!(out, "max_rate = {}", o.max_rate);
        let _ = writeln!(out, "nv_ppm = {}", o.nv_ppm);
        let _ = writeln!(out, "readout_time = {}", o.readout_time);
        let _ = writeln!(out, "max_path = {}", o.max_path);
        let _ = writeln!(out);
        let d = &self.dispersion;
        let _ = writeln!(out, "[dispersion]");
        let _ = writeln!(out, "G = {}", d.magnification);
        let _ = writeln!(out, "k = {}", d.magnification_spread);
        let _ = writeln!(out, "B_r0 = {}", d.remanence);
        let _ = writeln!(out, "m = {}", d.remanence_spread);
        let _ = writeln!(out, "C = {}", d.contrast);
        let _ = writeln!(out, "T_coh = {}", d.coherence_time);
        let _ = writeln!(out, "p = {}", d.stretch_exp);
        let _ = writeln!(out, "tau = {}", d.evolution_time);
        let _ = writeln!(out, "kappa = {}", d.kappa);
        let _ = writeln!(out);
        let s = &self.dsp;
        let _ = writeln!(out, "[dsp]");
        let _ = writeln!(out, "fs = {}", s.fs);
        let _ = writeln!(out, "duration = {}", s.duration);
        let _ = writeln!(out, "floor = {}", s.floor);
        for t in &s.tones {
            let _ = writeln!(out, "tone = {} {}", t.frequency, t.amplitude);
        }
        if let Some(drift) = s.drift {
            let _ = writeln!(out, "drift_corner = {}", drift.corner_hz);
        }
        out
    }
}

/// One parsed `key = value` with its source line for error reporting.
struct RawValue {
    line: usize,
    text: String,
}

/// Section name → key → values (tone repeats, everything else overwrites).
struct RawScenario {
    sections: Vec<(String, BTreeMap<String, Vec<RawValue>>)>,
}

impl RawScenario {
    fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, BTreeMap<String, Vec<RawValue>>)> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Parse {
                    line: line_no,
                    message: "section header is missing the closing ']'".into(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "section name is empty".into(),
                    });
                }
                sections.push((name.to_string(), BTreeMap::new()));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: line_no,
                message: format!("expected 'key = value', got {line:?}"),
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if value.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("key {key:?} has no value"),
                });
            }
            let Some((_, keys)) = sections.last_mut() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("key {key:?} appears before any [section] header"),
                });
            };
            keys.entry(key).or_default().push(RawValue {
                line: line_no,
                text: value,
            });
        }
        Ok(RawScenario { sections })
    }

    fn build(self) -> Result<ScenarioConfig> {
        let consts = PhysicalConstants::default();
        let mut protocols = Vec::new();
        let mut modulation = ModulationBlock::default();
        let mut optical = OpticalParams::current();
        let mut dispersion = DispersionParams::practical(&consts);
        let mut dsp = DspBlock::default();
        let mut kappa_given = false;

        for (name, keys) in self.sections {
            if let Some(proto_name) = name.strip_prefix("protocol.") {
                let params = build_protocol(&keys)?;
                protocols.push(NamedProtocol {
                    name: proto_name.trim().to_string(),
                    params,
                });
                continue;
            }
            match name.as_str() {
                "modulation" => {
                    for (key, vals) in &keys {
                        let v = last(vals);
                        let x = quantity(v)?;
                        match key.as_str() {
                            "f_mod" => modulation.f_mod = x,
                            "amplitude" => modulation.amplitude = x,
                            "h_eq" => modulation.h_eq = x,
                            "phase" => modulation.phase = x,
                            _ => return Err(unknown_key(key, "modulation", v.line)),
                        }
                    }
                }
                "optical" => {
                    for (key, vals) in &keys {
                        let v = last(vals);
                        let x = quantity(v)?;
                        match key.as_str() {
                            "laser_power" => optical.laser_power = x,
                            "spot_radius" => optical.spot_radius = x,
                            "spot_area" => optical.spot_area = x,
                            "saturation_intensity" => optical.saturation_intensity = x,
                            "max_rate" => optical.max_rate = x,
                            "nv_ppm" => optical.nv_ppm = x,
                            "readout_time" => optical.readout_time = x,
                            "max_path" => optical.max_path = x,
                            _ => return Err(unknown_key(key, "optical", v.line)),
                        }
                    }
                }
                "dispersion" => {
                    for (key, vals) in &keys {
                        let v = last(vals);
                        let x = quantity(v)?;
                        match key.as_str() {
                            "G" => dispersion.magnification = x,
                            "k" => dispersion.magnification_spread = x,
                            "B_r0" => dispersion.remanence = x,
                            "m" => dispersion.remanence_spread = x,
                            "C" => dispersion.contrast = x,
                            "T_coh" => dispersion.coherence_time = x,
                            "p" => dispersion.stretch_exp = x,
                            "tau" => dispersion.evolution_time = x,
                            "kappa" => {
                                dispersion.kappa = x;
                                kappa_given = true;
                            }
                            _ => return Err(unknown_key(key, "dispersion", v.line)),
                        }
                    }
                }
                "dsp" => {
                    for (key, vals) in &keys {
                        match key.as_str() {
                            "fs" => dsp.fs = quantity(last(vals))?,
                            "duration" => dsp.duration = quantity(last(vals))?,
                            "floor" => dsp.floor = quantity(last(vals))?,
                            "drift_corner" => {
                                dsp.drift = Some(DriftModel {
                                    corner_hz: quantity(last(vals))?,
                                })
                            }
                            "tone" => {
                                dsp.tones = vals
                                    .iter()
                                    .map(tone_value)
                                    .collect::<Result<Vec<Tone>>>()?;
                            }
                            _ => return Err(unknown_key(key, "dsp", last(vals).line)),
                        }
                    }
                }
                other => {
                    return Err(Error::domain(format!(
                        "unknown section [{other}]; expected protocol.<name>, modulation, optical, dispersion, or dsp"
                    )))
                }
            }
        }

        if protocols.is_empty() {
            return Err(Error::MissingBlock("protocol".into()));
        }
        // Keeping kappa in sync with an edited evolution time needs the
        // recomputation, but an explicit kappa wins.
        if !kappa_given {
            dispersion.kappa = DispersionParams::echo_kappa(
                crate::params::ALPHA_100,
                0.096,
                dispersion.evolution_time,
                &consts,
            );
        }

        for p in &protocols {
            let report = validate_params(&p.params);
            if !report.is_ok() {
                return Err(Error::Validation(report));
            }
        }
        optical.validate()?;
        dispersion.validate()?;
        crate::error::ensure_domain!(
            dsp.fs.is_finite() && dsp.fs > 0.0,
            "dsp.fs must be positive, got {}",
            dsp.fs
        );
        crate::error::ensure_domain!(
            dsp.duration.is_finite() && dsp.duration > 0.0,
            "dsp.duration must be positive, got {}",
            dsp.duration
        );
        crate::error::ensure_domain!(
            dsp.floor.is_finite() && dsp.floor >= 0.0,
            "dsp.floor must be nonnegative, got {}",
            dsp.floor
        );

        Ok(ScenarioConfig {
            protocols,
            modulation,
            optical,
            dispersion,
            dsp,
        })
    }
}

fn last(vals: &[RawValue]) -> &RawValue {
    vals.last().expect("key maps hold at least one value")
}

fn unknown_key(key: &str, section: &str, line: usize) -> Error {
    Error::Parse {
        line,
        message: format!("unknown key {key:?} in [{section}]"),
    }
}

fn build_protocol(keys: &BTreeMap<String, Vec<RawValue>>) -> Result<ProtocolParams> {
    let mut p = ProtocolParams::table_s1_ramsey();
    for (key, vals) in keys {
        let v = last(vals);
        let x = quantity(v)?;
        match key.as_str() {
            "A" => p.a_coeff = x,
            "G" => p.magnification = x,
            "alpha" => p.angle_factor = x,
            "E_F" => p.mod_efficiency = x,
            "C" => p.contrast = x,
            "N" => p.photons = x,
            "T_coh" => p.coherence_time = x,
            "p" => p.stretch_exp = x,
            "tau" => p.evolution_time = x,
            "t_m" => p.overhead_time = x,
            "n_f" => p.noise_ratio = x,
            "delta_ms" => p.delta_ms = x,
            _ => return Err(unknown_key(key, "protocol", v.line)),
        }
    }
    Ok(p)
}

/// Unit suffixes accepted after a number, as decimal exponents. Every unit
/// is a power of ten over SI, so conversion composes exponents textually
/// and stays bit-exact for any decimal spelling of the same value.
fn unit_exponent(unit: &str) -> Option<i32> {
    Some(match unit {
        "s" | "T" | "Hz" | "m" | "W" | "W/m2" | "m2" => 0,
        "ms" | "mT" | "mm" | "mW" => -3,
        "us" | "uT" | "um" => -6,
        "ns" | "nT" | "nm" => -9,
        "pT" => -12,
        "G" => -4,
        "kHz" => 3,
        "MHz" | "MW/m2" => 6,
        "mm2" => -6,
        "um2" => -12,
        "%" => -2,
        _ => return None,
    })
}

/// Applies a decimal exponent to a number token by rewriting its exponent
/// field, then parsing once (correctly rounded).
fn apply_unit(num: &str, shift: i32, line: usize) -> Result<f64> {
    let bad = || Error::Parse {
        line,
        message: format!("{num:?} is not a number"),
    };
    if shift == 0 {
        return num.parse().map_err(|_| bad());
    }
    let (mantissa, exp) = match num.find(['e', 'E']) {
        Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (num, 0),
    };
    format!("{mantissa}e{}", exp + shift)
        .parse()
        .map_err(|_| bad())
}

/// Parses one number with an optional unit suffix; `pi/2` is accepted for
/// the protocol coefficient.
fn quantity(v: &RawValue) -> Result<f64> {
    parse_quantity(&v.text, v.line)
}

fn parse_quantity(text: &str, line: usize) -> Result<f64> {
    let tokens = tokens_of(text);
    match parse_tokens(&tokens, line)? {
        (x, []) => Ok(x),
        _ => Err(Error::Parse {
            line,
            message: format!("expected a single quantity, got {text:?}"),
        }),
    }
}

/// `tone = 0.1 Hz 12 nT` (units optional): frequency then amplitude.
fn tone_value(v: &RawValue) -> Result<Tone> {
    let tokens = tokens_of(&v.text);
    let (frequency, rest) = parse_tokens(&tokens, v.line)?;
    let (amplitude, rest) = parse_tokens(rest, v.line)?;
    if !rest.is_empty() {
        return Err(Error::Parse {
            line: v.line,
            message: format!("trailing input after tone value: {:?}", rest.join(" ")),
        });
    }
    Ok(Tone::new(frequency, amplitude))
}

/// Splits on whitespace, then detaches unit suffixes glued to numbers
/// ("3um" → "3", "um"). The micro sign is normalized to 'u'.
fn tokens_of(text: &str) -> Vec<String> {
    let text = text.replace(['µ', 'μ'], "u");
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        if word.parse::<f64>().is_ok() || unit_exponent(word).is_some() || word == "pi/2" {
            tokens.push(word.to_string());
            continue;
        }
        let split = word
            .char_indices()
            .rev()
            .map(|(i, _)| i)
            .find(|&i| word[..i].parse::<f64>().is_ok() && unit_exponent(&word[i..]).is_some());
        match split {
            Some(i) => {
                tokens.push(word[..i].to_string());
                tokens.push(word[i..].to_string());
            }
            None => tokens.push(word.to_string()),
        }
    }
    tokens
}

/// Consumes one quantity (number + optional unit) from the token stream.
fn parse_tokens(tokens: &[String], line: usize) -> Result<(f64, &[String])> {
    let Some(first) = tokens.first() else {
        return Err(Error::Parse {
            line,
            message: "expected a number, found end of value".into(),
        });
    };
    if first == "pi/2" {
        return Ok((std::f64::consts::FRAC_PI_2, &tokens[1..]));
    }
    if first.parse::<f64>().is_err() {
        return Err(Error::Parse {
            line,
            message: format!("{first:?} is not a number"),
        });
    }
    if let Some(unit) = tokens.get(1) {
        if let Some(shift) = unit_exponent(unit) {
            return Ok((apply_unit(first, shift, line)?, &tokens[2..]));
        }
        if unit.parse::<f64>().is_err() {
            return Err(Error::Parse {
                line,
                message: format!("unknown unit {unit:?}"),
            });
        }
    }
    Ok((apply_unit(first, 0, line)?, &tokens[1..]))
}
