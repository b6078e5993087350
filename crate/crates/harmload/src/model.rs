//! Model and evaluation report files.

use std::path::Path;

use harmload_core::fcm::{FcmModel, FitReport, OrderCurve, PointId, TrainingInfo};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::complex;
use crate::error::{FileError, FileResult};
use crate::files::{from_json, read_string, write_atomic};

pub const MODEL_FORMAT: &str = "harmload-fcm/1";
pub const REPORT_FORMAT: &str = "harmload-report/1";

/// Condition numbers are written as numbers, or `"inf"` when rank deficient.
mod cond {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Training {
    case: Option<u8>,
    k_train: usize,
    #[serde(with = "cond")]
    cond: f64,
    rank: usize,
    rank_deficient: bool,
    points: Vec<PointId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    f0: f64,
    current_orders: usize,
    voltage_orders: Vec<usize>,
    i0: Vec<[f64; 2]>,
    #[serde(rename = "Y")]
    y: Vec<[f64; 2]>,
    training: Training,
}

fn flat(c: &[harmload_core::Complex64]) -> Vec<[f64; 2]> {
    c.iter().map(|c| [c.re, c.im]).collect()
}

pub fn model_to_json(m: &FcmModel) -> String {
    let f = ModelFile {
        version: MODEL_FORMAT.to_string(),
        f0: m.fundamental_hz,
        current_orders: m.current_orders(),
        voltage_orders: m.voltage_orders.clone(),
        i0: flat(&m.i0),
        y: flat(&m.y),
        training: Training {
            case: m.training.case_id,
            k_train: m.training.k_train(),
            cond: m.training.condition_number,
            rank: m.training.rank,
            rank_deficient: m.training.rank_deficient,
            points: m.training.points.clone(),
        },
    };
    let mut s = serde_json::to_string_pretty(&f).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str, path: &Path) -> FileResult<FcmModel> {
    let f: ModelFile = from_json(text).map_err(|(line, m)| FileError::parse(path, line, m))?;
    let bad = |m: String| FileError::parse(path, 1, m);
    if f.version != MODEL_FORMAT {
        return Err(bad(format!("unsupported version `{}`, expected `{MODEL_FORMAT}`", f.version)));
    }
    if f.i0.len() != f.current_orders {
        return Err(bad(format!(
            "field `i0`: expected {} entries, found {}",
            f.current_orders,
            f.i0.len()
        )));
    }
    if f.training.k_train != f.training.points.len() {
        return Err(bad(format!(
            "field `training.k_train`: {} disagrees with {} listed points",
            f.training.k_train,
            f.training.points.len()
        )));
    }
    let m = FcmModel {
        fundamental_hz: f.f0,
        i0: complex(&f.i0),
        y: complex(&f.y),
        voltage_orders: f.voltage_orders,
        training: TrainingInfo {
            case_id: f.training.case,
            points: f.training.points,
            condition_number: f.training.cond,
            rank: f.training.rank,
            rank_deficient: f.training.rank_deficient,
        },
    };
    m.validate().map_err(|e| bad(e.to_string()))?;
    Ok(m)
}

pub fn save_model(m: &FcmModel, path: &Path) -> FileResult<()> {
    write_atomic(path, model_to_json(m).as_bytes())
}

pub fn load_model(path: &Path) -> FileResult<FcmModel> {
    model_from_json(&read_string(path)?, path)
}

#[derive(Serialize)]
struct Summary {
    count: usize,
    median: f64,
    p95: f64,
    max: f64,
    mean_square: f64,
}

#[derive(Serialize)]
struct PointEntry<'a> {
    case: u8,
    alpha: f64,
    flagged: bool,
    max: f64,
    errors: &'a [f64],
    parasitic_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reconstruction: Option<&'a str>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    format: &'static str,
    model: &'a str,
    voltage_orders: &'a [usize],
    train: &'a [PointId],
    test: &'a [PointId],
    summary: Summary,
    points: Vec<PointEntry<'a>>,
}

/// Report JSON; `reconstructions[k]` names the predicted waveform of point `k`.
pub fn report_to_json(r: &FitReport, model: &FcmModel, model_ref: &str, reconstructions: &[Option<String>]) -> String {
    let s = r.summary;
    let f = ReportFile {
        format: REPORT_FORMAT,
        model: model_ref,
        voltage_orders: &model.voltage_orders,
        train: &r.train,
        test: &r.test,
        summary: Summary {
            count: s.count,
            median: s.median,
            p95: s.p95,
            max: s.max,
            mean_square: s.mean_square,
        },
        points: r
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| PointEntry {
                case: p.id.case_id,
                alpha: p.id.alpha_imp,
                flagged: p.flagged,
                max: p.max,
                errors: &p.per_order,
                parasitic_ratio: p.parasitic_ratio,
                reconstruction: reconstructions.get(k).and_then(|x| x.as_deref()),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&f).expect("report serializes");
    out.push('\n');
    out
}

#[derive(Serialize)]
struct CurveEntry<'a> {
    n_prime: usize,
    orders: &'a [usize],
    train_err: f64,
    test_err: f64,
    #[serde(with = "cond")]
    cond: f64,
}

#[derive(Serialize)]
struct Skipped {
    n_prime: usize,
    reason: String,
}

#[derive(Serialize)]
struct CurveFile<'a> {
    case: Option<u8>,
    train: Vec<PointId>,
    test: Vec<PointId>,
    curve: Vec<CurveEntry<'a>>,
    skipped: Vec<Skipped>,
}

pub fn curve_to_json(c: &OrderCurve, case: Option<u8>, train: Vec<PointId>, test: Vec<PointId>) -> String {
    let f = CurveFile {
        case,
        train,
        test,
        curve: c
            .points
            .iter()
            .map(|p| CurveEntry {
                n_prime: p.n_prime,
                orders: &p.orders,
                train_err: p.train_error,
                test_err: p.test_error,
                cond: p.condition_number,
            })
            .collect(),
        skipped: c
            .skipped
            .iter()
            .map(|(n, e)| Skipped {
                n_prime: *n,
                reason: e.to_string(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&f).expect("curve serializes");
    out.push('\n');
    out
}
