//! JSON Lines dataset files: a header carrying the generator configuration,
//! then one measurement per line.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use harmload_core::datagen::{case_to_loads, Dataset, MeasurementPoint, Provenance, SweepConfig};
use harmload_core::signal::{HarmonicSpectrum, Unit};
use harmload_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FileError, FileResult};
use crate::files::{from_json, read_string, write_atomic};

pub const DATASET_FORMAT: &str = "harmload-ds/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    points: usize,
    config: SweepConfig,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Source {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    waveform: Option<String>,
    method: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    case: u8,
    alpha: f64,
    f0: f64,
    v: Vec<[f64; 2]>,
    i: Vec<[f64; 2]>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    source: Source,
}

pub(crate) fn pairs(s: &HarmonicSpectrum) -> Vec<[f64; 2]> {
    s.phasors().iter().map(|c| [c.re, c.im]).collect()
}

pub(crate) fn complex(p: &[[f64; 2]]) -> Vec<Complex64> {
    p.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

/// Serialized dataset, byte-for-byte deterministic.
pub fn to_jsonl(d: &Dataset) -> String {
    let header = Header {
        format: DATASET_FORMAT.to_string(),
        points: d.points.len(),
        config: d.config.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for p in &d.points {
        let r = Record {
            case: p.case_id,
            alpha: p.alpha_imp,
            f0: p.v.fundamental_hz,
            v: pairs(&p.v),
            i: pairs(&p.i),
            meta: p.meta.clone(),
            source: Source {
                waveform: p.provenance.waveform.clone(),
                method: p.provenance.method.clone(),
            },
        };
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save(d: &Dataset, path: &Path) -> FileResult<()> {
    write_atomic(path, to_jsonl(d).as_bytes())
}

pub fn load(path: &Path) -> FileResult<Dataset> {
    from_jsonl(&read_string(path)?, path)
}

fn spectrum(
    path: &Path,
    line: usize,
    field: &str,
    f0: f64,
    unit: Unit,
    p: &[[f64; 2]],
    expected: usize,
) -> FileResult<HarmonicSpectrum> {
    if p.len() != expected {
        return Err(FileError::parse(
            path,
            line,
            format!("field `{field}`: expected {expected} phasors, found {}", p.len()),
        ));
    }
    HarmonicSpectrum::new(f0, unit, complex(p))
        .map_err(|e| FileError::parse(path, line, format!("field `{field}`: {e}")))
}

/// Parses a dataset; `path` only labels errors.
pub fn from_jsonl(text: &str, path: &Path) -> FileResult<Dataset> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| FileError::parse(path, 1, "missing header line"))?;
    let header: Header = from_json(first).map_err(|(_, m)| FileError::parse(path, 1, format!("header: {m}")))?;
    if header.format != DATASET_FORMAT {
        return Err(FileError::parse(
            path,
            1,
            format!("unsupported format `{}`, expected `{DATASET_FORMAT}`", header.format),
        ));
    }
    let cfg = header.config;
    cfg.validate()
        .map_err(|e| FileError::parse(path, 1, format!("field `config`: {e}")))?;
    let f0 = cfg.fundamental_hz();
    let mut points = Vec::new();
    let mut seen: HashMap<(u8, u64), usize> = HashMap::new();
    for (line, text) in lines {
        let r: Record = from_json(text).map_err(|(_, m)| FileError::parse(path, line, m))?;
        let bad = |m: String| FileError::parse(path, line, m);
        case_to_loads(r.case).map_err(|e| bad(format!("field `case`: {e}")))?;
        if !(r.alpha.is_finite() && r.alpha >= 1.0) {
            return Err(bad(format!("field `alpha`: impedance gain must be >= 1, got {}", r.alpha)));
        }
        if r.f0 != f0 {
            return Err(bad(format!("field `f0`: {} Hz differs from the configured {f0} Hz", r.f0)));
        }
        if let Some(prev) = seen.insert((r.case, r.alpha.to_bits()), line) {
            return Err(bad(format!(
                "case {} at alpha {} duplicates line {prev}",
                r.case, r.alpha
            )));
        }
        let p = MeasurementPoint {
            case_id: r.case,
            alpha_imp: r.alpha,
            v: spectrum(path, line, "v", f0, Unit::Volt, &r.v, cfg.voltage_orders)?,
            i: spectrum(path, line, "i", f0, Unit::Ampere, &r.i, cfg.current_orders)?,
            provenance: Provenance {
                waveform: r.source.waveform,
                method: r.source.method,
            },
            meta: r.meta,
        };
        p.validate().map_err(|e| bad(e.to_string()))?;
        points.push(p);
    }
    if points.len() != header.points {
        return Err(FileError::parse(
            path,
            1,
            format!("header announces {} points, file holds {}", header.points, points.len()),
        ));
    }
    Dataset::new(cfg, points).map_err(|e| FileError::parse(path, 1, e.to_string()))
}
