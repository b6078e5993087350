//! Frequency coupling matrix identification: `i = i0 + Y v` fitted by
//! complex least squares over harmonic phasor measurements.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::datagen::MeasurementPoint;
use crate::linalg::{pseudo_inverse, singular_values, CMatrix};
use crate::signal::{parasitic_power_ratio, HarmonicSpectrum, Unit};
use crate::{Complex64, Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Identifies one measurement inside a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointId {
    pub case_id: u8,
    pub alpha_imp: f64,
}

impl PointId {
    pub fn of(p: &MeasurementPoint) -> Self {
        Self {
            case_id: p.case_id,
            alpha_imp: p.alpha_imp,
        }
    }
}

/// How a model was trained.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInfo {
    /// Case shared by every training point, if there is one.
    pub case_id: Option<u8>,
    pub points: Vec<PointId>,
    /// Singular value ratio of `Z = [1; V]`; infinite when rank deficient.
    pub condition_number: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl TrainingInfo {
    pub fn k_train(&self) -> usize {
        self.points.len()
    }
}

/// Fitted model. `y` is row-major with one row per current order and one
/// column per entry of `voltage_orders`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmModel {
    pub fundamental_hz: f64,
    pub i0: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub voltage_orders: Vec<usize>,
    pub training: TrainingInfo,
}

impl FcmModel {
    /// Highest current order `M`.
    pub fn current_orders(&self) -> usize {
        self.i0.len()
    }

    pub fn admittance(&self, row: usize, col: usize) -> Complex64 {
        self.y[row * self.voltage_orders.len() + col]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.i0.len();
        let n = self.voltage_orders.len();
        if m == 0 || n == 0 {
            return Err(Error::invalid("model needs at least one current and one voltage order"));
        }
        if self.y.len() != m * n {
            return Err(Error::invalid(format!(
                "admittance matrix holds {} entries, expected {m} x {n}",
                self.y.len()
            )));
        }
        if !self.voltage_orders.contains(&1) {
            return Err(Error::invalid("voltage orders must include the fundamental"));
        }
        if self.voltage_orders.windows(2).any(|w| w[0] >= w[1]) || self.voltage_orders[0] == 0 {
            return Err(Error::invalid("voltage orders must be positive and strictly ascending"));
        }
        if self.i0.iter().chain(&self.y).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("model entries must be finite"));
        }
        if !(self.fundamental_hz > 0.0 && self.fundamental_hz.is_finite()) {
            return Err(Error::invalid("fundamental frequency must be positive"));
        }
        Ok(())
    }
}

fn check_points(points: &[MeasurementPoint]) -> Result<(f64, usize, usize)> {
    let first = points.first().ok_or_else(|| Error::invalid("no measurement points"))?;
    let f0 = first.v.fundamental_hz;
    let (n, m) = (first.v.len(), first.i.len());
    for p in points {
        if p.v.fundamental_hz != f0 || p.i.fundamental_hz != f0 {
            return Err(Error::FundamentalMismatch(f0, p.i.fundamental_hz.max(p.v.fundamental_hz)));
        }
        if p.v.len() != n || p.i.len() != m {
            return Err(Error::invalid(format!(
                "case {} at alpha {}: harmonic counts differ from the first point",
                p.case_id, p.alpha_imp
            )));
        }
    }
    Ok((f0, n, m))
}

/// The `n_prime` voltage orders with the largest mean magnitude, ascending.
/// The fundamental is always included.
pub fn select_voltage_orders(points: &[MeasurementPoint], n_prime: usize) -> Result<Vec<usize>> {
    let (_, n, _) = check_points(points)?;
    if n_prime == 0 || n_prime > n {
        return Err(Error::invalid(format!(
            "n_prime must lie in 1..={n}, got {n_prime}"
        )));
    }
    let mut mean = vec![0.0; n];
    for p in points {
        for (acc, v) in mean.iter_mut().zip(p.v.phasors()) {
            *acc += v.norm();
        }
    }
    let mut ranked: Vec<usize> = (2..=n).collect();
    ranked.sort_by(|&a, &b| mean[b - 1].total_cmp(&mean[a - 1]).then(a.cmp(&b)));
    let mut orders = vec![1];
    orders.extend(ranked.into_iter().take(n_prime - 1));
    orders.sort_unstable();
    Ok(orders)
}

fn restricted_voltage(points: &[MeasurementPoint], orders: &[usize]) -> Result<CMatrix> {
    let n = points[0].v.len();
    if let Some(&h) = orders.iter().find(|&&h| h == 0 || h > n) {
        return Err(Error::MissingOrder(h));
    }
    Ok(DMatrix::from_fn(orders.len(), points.len(), |r, k| {
        points[k].v.order(orders[r])
    }))
}

fn ratio(s: &[f64], full: usize) -> f64 {
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if s.len() == full && lo > RANK_TOLERANCE * hi => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Condition number of the restricted voltage matrix (orders by points).
pub fn condition_number(points: &[MeasurementPoint], orders: &[usize]) -> Result<f64> {
    check_points(points)?;
    if orders.is_empty() {
        return Err(Error::invalid("no voltage orders"));
    }
    let v = restricted_voltage(points, orders)?;
    let s = singular_values(&v);
    Ok(ratio(&s, orders.len()))
}

/// Least-squares estimate `[i0 Y] = I Z^+` with `Z = [1; V]`.
pub fn fit(points: &[MeasurementPoint], orders: &[usize]) -> Result<FcmModel> {
    let (f0, _, m) = check_points(points)?;
    if orders.is_empty() || !orders.contains(&1) || orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "voltage orders must be strictly ascending and include the fundamental",
        ));
    }
    let np = orders.len();
    let k = points.len();
    if k < np + 1 {
        return Err(Error::TooFewPoints {
            required: np + 1,
            got: k,
        });
    }
    let v = restricted_voltage(points, orders)?;
    let z = DMatrix::from_fn(np + 1, k, |r, c| {
        if r == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            v[(r - 1, c)]
        }
    });
    let i = DMatrix::from_fn(m, k, |r, c| points[c].i.order(r + 1));
    let pinv = pseudo_inverse(&z, RANK_TOLERANCE);
    let theta = &i * &pinv.matrix;
    let i0 = (0..m).map(|r| theta[(r, 0)]).collect();
    let y = (0..m)
        .flat_map(|r| (1..=np).map(move |c| (r, c)))
        .map(|(r, c)| theta[(r, c)])
        .collect();
    let case_id = points[0].case_id;
    let model = FcmModel {
        fundamental_hz: f0,
        i0,
        y,
        voltage_orders: orders.to_vec(),
        training: TrainingInfo {
            case_id: points.iter().all(|p| p.case_id == case_id).then_some(case_id),
            points: points.iter().map(PointId::of).collect(),
            condition_number: ratio(&pinv.singular_values, np + 1),
            rank: pinv.rank,
            rank_deficient: pinv.rank < np + 1,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Current spectrum `i0 + Y v` for orders `1..=M`.
pub fn predict(model: &FcmModel, v: &HarmonicSpectrum) -> Result<HarmonicSpectrum> {
    if v.fundamental_hz != model.fundamental_hz {
        return Err(Error::FundamentalMismatch(model.fundamental_hz, v.fundamental_hz));
    }
    if v.unit != Unit::Volt {
        return Err(Error::invalid("prediction needs a voltage spectrum"));
    }
    if let Some(&h) = model.voltage_orders.iter().find(|&&h| h > v.len()) {
        return Err(Error::MissingOrder(h));
    }
    let n = model.voltage_orders.len();
    let out = model
        .i0
        .iter()
        .enumerate()
        .map(|(r, &i0)| {
            model.y[r * n..(r + 1) * n]
                .iter()
                .zip(&model.voltage_orders)
                .fold(i0, |acc, (y, &h)| acc + y * v.order(h))
        })
        .collect();
    HarmonicSpectrum::new(model.fundamental_hz, Unit::Ampere, out)
}

/// Prediction error of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub id: PointId,
    /// `|i_hat_h - i_h| / |I_1|` for orders `1..=M`; empty when flagged.
    pub per_order: Vec<f64>,
    /// Largest entry of `per_order`.
    pub max: f64,
    /// Set when the measured fundamental current is zero.
    pub flagged: bool,
    /// Harmonic to fundamental active power with the predicted current.
    pub parasitic_ratio: Option<f64>,
    pub predicted: HarmonicSpectrum,
}

/// Order statistics over every per-order error of every unflagged point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorSummary {
    pub count: usize,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub mean_square: f64,
}

impl ErrorSummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        let rank = libm::ceil(0.95 * n as f64) as usize;
        Self {
            count: n,
            median,
            p95: s[rank.clamp(1, n) - 1],
            max: s[n - 1],
            mean_square: s.iter().map(|e| e * e).sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub train: Vec<PointId>,
    pub test: Vec<PointId>,
    pub points: Vec<PointError>,
    pub summary: ErrorSummary,
}

impl FitReport {
    pub fn flagged(&self) -> impl Iterator<Item = &PointError> {
        self.points.iter().filter(|p| p.flagged)
    }
}

/// Normalized absolute errors of `model` on `points`.
pub fn evaluate(model: &FcmModel, points: &[MeasurementPoint]) -> Result<FitReport> {
    let mut all = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let predicted = predict(model, &p.v)?;
        let m = model.current_orders();
        if p.i.len() < m {
            return Err(Error::invalid(format!(
                "case {} at alpha {}: current spectrum holds {} orders, model needs {m}",
                p.case_id,
                p.alpha_imp,
                p.i.len()
            )));
        }
        let i1 = p.i.fundamental().norm();
        let flagged = i1 == 0.0;
        let per_order: Vec<f64> = if flagged {
            Vec::new()
        } else {
            (1..=m).map(|h| (predicted.order(h) - p.i.order(h)).norm() / i1).collect()
        };
        all.extend_from_slice(&per_order);
        let len = predicted.len().min(p.v.len());
        let parasitic_ratio = parasitic_power_ratio(&p.v.resized(len)?, &predicted.resized(len)?).ok();
        out.push(PointError {
            id: PointId::of(p),
            max: per_order.iter().copied().fold(0.0, f64::max),
            per_order,
            flagged,
            parasitic_ratio,
            predicted,
        });
    }
    Ok(FitReport {
        train: model.training.points.clone(),
        test: points.iter().map(PointId::of).collect(),
        points: out,
        summary: ErrorSummary::of(&all),
    })
}

/// Residual energy of `model` on `points`, normalized by the number of
/// entries and the mean squared fundamental current of the partition.
///
/// A common scale keeps the metric proportional to the least-squares cost, so
/// it never increases on the training set when orders are added.
pub fn mean_squared_error(model: &FcmModel, points: &[MeasurementPoint]) -> Result<f64> {
    let m = model.current_orders();
    let mut residual = 0.0;
    let mut reference = 0.0;
    for p in points {
        let predicted = predict(model, &p.v)?;
        residual += (1..=m).map(|h| (predicted.order(h) - p.i.order(h)).norm_sqr()).sum::<f64>();
        reference += p.i.fundamental().norm_sqr();
    }
    if reference == 0.0 {
        return Err(Error::ZeroFundamental("partition current"));
    }
    Ok(residual / (m as f64 * reference))
}

/// Disjoint train and test indices into a point list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// The first `train` points train, the rest test.
    pub fn first(len: usize, train: usize) -> Result<Self> {
        if train > len {
            return Err(Error::invalid(format!("cannot train on {train} of {len} points")));
        }
        Ok(Self {
            train: (0..train).collect(),
            test: (train..len).collect(),
        })
    }

    /// Holds out `test` points spread evenly along the list, roughly every
    /// `len / test`-th point starting inside the range.
    pub fn interleaved(len: usize, test: usize) -> Result<Self> {
        if test > len {
            return Err(Error::invalid(format!("cannot hold out {test} of {len} points")));
        }
        let held: Vec<usize> = (0..test)
            .map(|j| ((2 * j + 1) * len) / (2 * test))
            .collect();
        Ok(Self {
            train: (0..len).filter(|i| !held.contains(i)).collect(),
            test: held,
        })
    }

    /// Split from an explicit permutation: the first `train` entries train.
    pub fn from_permutation(order: &[usize], train: usize) -> Result<Self> {
        let len = order.len();
        let mut seen = vec![false; len];
        for &i in order {
            if i >= len || core::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("split order is not a permutation"));
            }
        }
        if train > len {
            return Err(Error::invalid(format!("cannot train on {train} of {len} points")));
        }
        let mut tr = order[..train].to_vec();
        let mut te = order[train..].to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        Ok(Self { train: tr, test: te })
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        let mut seen = vec![false; len];
        for &i in self.train.iter().chain(&self.test) {
            if i >= len || core::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("split is not a disjoint cover of the points"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split is not a disjoint cover of the points"));
        }
        Ok(())
    }

    pub fn apply(
        &self,
        points: &[MeasurementPoint],
    ) -> Result<(Vec<MeasurementPoint>, Vec<MeasurementPoint>)> {
        self.validate(points.len())?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| points[i].clone()).collect();
        Ok((pick(&self.train), pick(&self.test)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSweepPoint {
    pub n_prime: usize,
    pub orders: Vec<usize>,
    pub train_error: f64,
    pub test_error: f64,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrderCurve {
    pub points: Vec<OrderSweepPoint>,
    /// Model orders that could not be fitted, with the reason.
    pub skipped: Vec<(usize, Error)>,
}

impl OrderCurve {
    /// Entry with the lowest test error; the smallest model wins ties.
    pub fn best(&self) -> Option<&OrderSweepPoint> {
        self.points.iter().reduce(|a, b| if b.test_error < a.test_error { b } else { a })
    }
}

/// Training and test error for every model order in `n_primes`. Orders are
/// selected from the training points only.
pub fn model_order_sweep(
    points: &[MeasurementPoint],
    split: &Split,
    n_primes: impl IntoIterator<Item = usize>,
) -> Result<OrderCurve> {
    let (train, test) = split.apply(points)?;
    if train.is_empty() {
        return Err(Error::invalid("empty training partition"));
    }
    let mut curve = OrderCurve::default();
    for n_prime in n_primes {
        let orders = match select_voltage_orders(&train, n_prime) {
            Ok(o) => o,
            Err(e) => {
                curve.skipped.push((n_prime, e));
                continue;
            }
        };
        let model = match fit(&train, &orders) {
            Ok(m) => m,
            Err(e @ Error::TooFewPoints { .. }) => {
                curve.skipped.push((n_prime, e));
                continue;
            }
            Err(e) => return Err(e),
        };
        let test_error = if test.is_empty() {
            f64::NAN
        } else {
            mean_squared_error(&model, &test)?
        };
        curve.points.push(OrderSweepPoint {
            n_prime,
            train_error: mean_squared_error(&model, &train)?,
            test_error,
            condition_number: model.training.condition_number,
            orders,
        });
    }
    Ok(curve)
}
