//! Raw waveforms (little-endian `f64` binary with a JSON sidecar), spectrum
//! files and netlist dumps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use harmload_core::circuits::{Controller, ElementKind, Netlist, SourceWaveform};
use harmload_core::signal::{thd, Channel, HarmonicSpectrum, SampledWaveform, Unit};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::pairs;
use crate::error::{FileError, FileResult};
use crate::files::{from_json, write_atomic};

pub const WAVEFORM_FORMAT: &str = "harmload-wave/1";
pub const LAYOUT: &str = "channel-major-f64le";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelEntry {
    name: String,
    unit: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    data: String,
    layout: String,
    sample_rate: f64,
    fundamental_hz: f64,
    start_time: f64,
    steady_state: bool,
    samples: usize,
    channels: Vec<ChannelEntry>,
    meta: BTreeMap<String, String>,
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<prefix>.bin` and `<prefix>.json`; returns both paths.
pub fn save_waveform(w: &SampledWaveform, prefix: &Path) -> FileResult<(PathBuf, PathBuf)> {
    let bin = with_extension(prefix, "bin");
    let side = with_extension(prefix, "json");
    let n = w.len();
    let mut bytes = Vec::with_capacity(8 * n * w.channels.len());
    for c in &w.channels {
        for x in &c.samples {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomic(&bin, &bytes)?;
    let sidecar = Sidecar {
        format: WAVEFORM_FORMAT.to_string(),
        data: bin.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        layout: LAYOUT.to_string(),
        sample_rate: w.sample_rate,
        fundamental_hz: w.fundamental_hz,
        start_time: w.start_time,
        steady_state: w.steady_state,
        samples: n,
        channels: w
            .channels
            .iter()
            .map(|c| ChannelEntry {
                name: c.name.clone(),
                unit: c.unit.as_str().to_string(),
            })
            .collect(),
        meta: w.meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    write_atomic(&side, text.as_bytes())?;
    Ok((bin, side))
}

/// Reads a waveform back from its sidecar.
pub fn load_waveform(sidecar: &Path) -> FileResult<SampledWaveform> {
    let text = std::fs::read_to_string(sidecar).map_err(|e| FileError::io(sidecar, e))?;
    let s: Sidecar = from_json(&text).map_err(|(line, m)| FileError::parse(sidecar, line, m))?;
    let bad = |m: String| FileError::parse(sidecar, 1, m);
    if s.format != WAVEFORM_FORMAT || s.layout != LAYOUT {
        return Err(bad(format!("unsupported waveform format `{}` / layout `{}`", s.format, s.layout)));
    }
    let bin = sidecar.with_file_name(&s.data);
    let bytes = std::fs::read(&bin).map_err(|e| FileError::io(&bin, e))?;
    if bytes.len() != 8 * s.samples * s.channels.len() {
        return Err(bad(format!(
            "{} holds {} bytes, expected {} channels of {} samples",
            bin.display(),
            bytes.len(),
            s.channels.len(),
            s.samples
        )));
    }
    let mut channels = Vec::with_capacity(s.channels.len());
    for (k, c) in s.channels.into_iter().enumerate() {
        let unit = Unit::parse(&c.unit).ok_or_else(|| bad(format!("field `channels[{k}].unit`: unknown unit `{}`", c.unit)))?;
        let samples = bytes[8 * k * s.samples..8 * (k + 1) * s.samples]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        channels.push(Channel {
            name: c.name,
            unit,
            samples,
        });
    }
    let w = SampledWaveform {
        sample_rate: s.sample_rate,
        fundamental_hz: s.fundamental_hz,
        start_time: s.start_time,
        channels,
        meta: s.meta,
        steady_state: s.steady_state,
    };
    w.validate().map_err(|e| bad(e.to_string()))?;
    Ok(w)
}

/// Spectrum file listing named spectra with their THD.
pub fn spectra_to_json(entries: &[(&str, &HarmonicSpectrum)]) -> String {
    let f0 = entries.first().map(|e| e.1.fundamental_hz).unwrap_or(0.0);
    let channels: Vec<Value> = entries
        .iter()
        .map(|(name, s)| {
            json!({
                "name": name,
                "unit": s.unit.as_str(),
                "phasors": pairs(s),
                "thd": thd(s).ok(),
            })
        })
        .collect();
    let v = json!({
        "fundamental_hz": f0,
        "convention": "RMS phasors [re, im] of the sine series, orders 1..N; phase relative to sin(2 pi f0 t)",
        "channels": channels,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("spectra serialize");
    s.push('\n');
    s
}

fn source_json(w: &SourceWaveform) -> Value {
    match *w {
        SourceWaveform::Dc(v) => json!({"kind": "dc", "volts": v}),
        SourceWaveform::Sine { rms, frequency, phase } => {
            json!({"kind": "sine", "rms_volts": rms, "frequency_hz": frequency, "phase_rad": phase})
        }
    }
}

fn kind_json(k: &ElementKind) -> Value {
    match k {
        ElementKind::Resistor { ohms } => json!({"ohms": ohms}),
        ElementKind::Inductor { henries, initial_current } => {
            json!({"henries": henries, "initial_current_amperes": initial_current})
        }
        ElementKind::Capacitor { farads, initial_voltage } => {
            json!({"farads": farads, "initial_voltage_volts": initial_voltage})
        }
        ElementKind::VoltageSource(w) => source_json(w),
        ElementKind::IdealTransformer { ratio } => json!({"ratio": ratio}),
        ElementKind::Diode { g_on, g_off } => json!({"g_on_siemens": g_on, "g_off_siemens": g_off}),
        ElementKind::Switch { gate, g_on, g_off } => json!({
            "controller": gate.controller,
            "channel": gate.channel,
            "g_on_siemens": g_on,
            "g_off_siemens": g_off,
        }),
        ElementKind::ConstantPowerSink {
            watts,
            nominal_voltage,
            clamp_fraction,
            time_constant,
        } => json!({
            "watts": watts,
            "nominal_voltage_volts": nominal_voltage,
            "clamp_fraction": clamp_fraction,
            "time_constant_seconds": time_constant,
        }),
    }
}

fn controller_json(c: &Controller, n: &Netlist) -> Value {
    match c {
        Controller::Pwm(p) => json!({
            "kind": "pwm",
            "frequency_hz": p.frequency,
            "duty": p.duty,
            "phase_offset_seconds": p.phase_offset,
        }),
        Controller::Inverter(c) => json!({
            "kind": "inverter",
            "carrier_hz": c.carrier_hz,
            "fundamental_hz": c.fundamental_hz,
            "current_rms_amperes": c.current_rms,
            "current_phase_rad": c.current_phase,
            "dc_voltage_volts": c.dc_voltage,
            "kp_ohms": c.kp,
            "filter_inductance_henries": c.filter_inductance,
            "dead_time_seconds": c.dead_time,
            "sense_element": n.elements.get(c.sense_element).map(|e| e.name.as_str()),
            "sense_nodes": [&n.node_names[c.sense_nodes.0], &n.node_names[c.sense_nodes.1]],
            "grid_rms_volts": c.grid_rms,
        }),
    }
}

/// JSON description of a netlist for inspection.
pub fn netlist_to_json(n: &Netlist) -> String {
    let elements: Vec<Value> = n
        .elements
        .iter()
        .map(|e| {
            json!({
                "name": e.name,
                "type": e.kind.type_name(),
                "terminals": e.terminals.iter().map(|&t| n.node_names[t].as_str()).collect::<Vec<_>>(),
                "parameters": kind_json(&e.kind),
            })
        })
        .collect();
    let v = json!({
        "case": n.case_id,
        "alpha_imp": n.alpha_imp,
        "nodes": n.node_names,
        "elements": elements,
        "controllers": n.controllers.iter().map(|c| controller_json(c, n)).collect::<Vec<_>>(),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("netlist serializes");
    s.push('\n');
    s
}
