//! Plot-ready CSV tables.

use std::path::Path;

use harmload_core::datagen::MeasurementPoint;
use harmload_core::fcm::{FitReport, OrderCurve};
use harmload_core::signal::thd;

use crate::error::FileResult;
use crate::files::write_atomic;

fn table(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn number(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

fn write(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> FileResult<()> {
    write_atomic(path, &table(header, rows))
}

/// `orders,cond`: condition number of the voltage matrix for the `orders`
/// most significant harmonics.
pub fn write_condition(path: &Path, rows: &[(usize, f64)]) -> FileResult<()> {
    write(
        path,
        &["orders", "cond"],
        rows.iter().map(|&(n, c)| vec![n.to_string(), number(c)]).collect(),
    )
}

/// `n_prime,train_err,test_err`.
pub fn write_order_curve(path: &Path, curve: &OrderCurve) -> FileResult<()> {
    write(
        path,
        &["n_prime", "train_err", "test_err"],
        curve
            .points
            .iter()
            .map(|p| vec![p.n_prime.to_string(), number(p.train_error), number(p.test_error)])
            .collect(),
    )
}

/// `case,alpha,v_thd,i_thd`.
pub fn write_distortion(path: &Path, points: &[MeasurementPoint]) -> FileResult<()> {
    let rows = points
        .iter()
        .map(|p| {
            let t = |s| thd(s).map(number).unwrap_or_default();
            vec![p.case_id.to_string(), number(p.alpha_imp), t(&p.v), t(&p.i)]
        })
        .collect();
    write(path, &["case", "alpha", "v_thd", "i_thd"], rows)
}

/// `case,point,alpha,order,error`: one row per harmonic of every unflagged point.
pub fn write_errors(path: &Path, report: &FitReport) -> FileResult<()> {
    let mut rows = Vec::new();
    for (k, p) in report.points.iter().enumerate() {
        for (h, e) in p.per_order.iter().enumerate() {
            rows.push(vec![
                p.id.case_id.to_string(),
                k.to_string(),
                number(p.id.alpha_imp),
                (h + 1).to_string(),
                number(*e),
            ]);
        }
    }
    write(path, &["case", "point", "alpha", "order", "error"], rows)
}

/// `case,alpha,ratio`: harmonic over fundamental active power.
pub fn write_parasitic(path: &Path, rows: &[(u8, f64, Option<f64>)]) -> FileResult<()> {
    write(
        path,
        &["case", "alpha", "ratio"],
        rows.iter()
            .map(|&(c, a, r)| vec![c.to_string(), number(a), r.map(number).unwrap_or_default()])
            .collect(),
    )
}
