//! Periodic signals, RMS phasor spectra, THD and harmonic power.
//!
//! Every spectrum in this crate uses the sine-series RMS convention
//!
//! ```text
//! x(t) = sum_h sqrt(2) * |p_h| * sin(h * w0 * t + arg(p_h))
//! ```
//!
//! with `p_h` stored densely at index `h - 1`. Order 0 (DC) is never stored.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::math::{self, SQRT_2, TAU};
use crate::{Error, Result};

/// Physical unit carried by a channel or spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Volt,
    Ampere,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Volt => "volt",
            Unit::Ampere => "ampere",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "volt" | "V" => Some(Unit::Volt),
            "ampere" | "A" => Some(Unit::Ampere),
            _ => None,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One named, uniformly sampled real channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub unit: Unit,
    pub samples: Vec<f64>,
}

/// Uniformly sampled multi-channel time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    /// Samples per second.
    pub sample_rate: f64,
    /// Fundamental frequency in hertz.
    pub fundamental_hz: f64,
    /// Time of the first sample in seconds.
    pub start_time: f64,
    pub channels: Vec<Channel>,
    /// Free-form tags such as the case id and impedance gain.
    pub meta: BTreeMap<String, String>,
    /// Set by the transient recorder once the run has settled.
    pub steady_state: bool,
}

/// Borrowed view of a single channel together with its timing.
#[derive(Debug, Clone, Copy)]
pub struct ChannelView<'a> {
    pub samples: &'a [f64],
    pub sample_rate: f64,
    pub fundamental_hz: f64,
    pub start_time: f64,
    pub unit: Unit,
}

impl SampledWaveform {
    pub fn new(sample_rate: f64, fundamental_hz: f64) -> Self {
        Self {
            sample_rate,
            fundamental_hz,
            start_time: 0.0,
            channels: Vec::new(),
            meta: BTreeMap::new(),
            steady_state: false,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples per fundamental period (not necessarily integral).
    pub fn samples_per_period(&self) -> f64 {
        self.sample_rate / self.fundamental_hz
    }

    pub fn channel(&self, name: &str) -> Option<ChannelView<'_>> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| self.view_of(c))
    }

    pub fn channel_at(&self, index: usize) -> Option<ChannelView<'_>> {
        self.channels.get(index).map(|c| self.view_of(c))
    }

    fn view_of<'a>(&'a self, c: &'a Channel) -> ChannelView<'a> {
        ChannelView {
            samples: &c.samples,
            sample_rate: self.sample_rate,
            fundamental_hz: self.fundamental_hz,
            start_time: self.start_time,
            unit: c.unit,
        }
    }

    /// Checks the structural invariants: equal channel lengths, finite
    /// samples, an integral number of samples per period, and at least three
    /// periods when tagged steady-state.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.fundamental_hz > 0.0) {
            return Err(Error::invalid("sample rate and fundamental must be positive"));
        }
        let spp = self.samples_per_period();
        if (spp - math::round(spp)).abs() > 1e-9 * spp {
            return Err(Error::invalid(alloc::format!(
                "sample rate / fundamental = {spp} is not an integer"
            )));
        }
        let len = self.len();
        for c in &self.channels {
            if c.samples.len() != len {
                return Err(Error::invalid(alloc::format!(
                    "channel `{}` has {} samples, expected {len}",
                    c.name,
                    c.samples.len()
                )));
            }
            if let Some(k) = c.samples.iter().position(|x| !x.is_finite()) {
                return Err(Error::invalid(alloc::format!(
                    "channel `{}` sample {k} is not finite",
                    c.name
                )));
            }
        }
        if self.steady_state && (len as f64) < 3.0 * math::round(spp) {
            return Err(Error::invalid("steady-state waveform holds fewer than three periods"));
        }
        Ok(())
    }
}

/// Ordered RMS phasors for harmonic orders `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    pub fundamental_hz: f64,
    pub unit: Unit,
    phasors: Vec<Complex64>,
}

impl HarmonicSpectrum {
    pub fn new(fundamental_hz: f64, unit: Unit, phasors: Vec<Complex64>) -> Result<Self> {
        if phasors.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if !(fundamental_hz > 0.0 && fundamental_hz.is_finite()) {
            return Err(Error::invalid("fundamental frequency must be positive"));
        }
        if let Some(k) = phasors.iter().position(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::invalid(alloc::format!(
                "phasor of order {} is not finite",
                k + 1
            )));
        }
        Ok(Self {
            fundamental_hz,
            unit,
            phasors,
        })
    }

    /// All-zero spectrum with `orders` entries.
    pub fn zeros(fundamental_hz: f64, unit: Unit, orders: usize) -> Result<Self> {
        Self::new(fundamental_hz, unit, vec![Complex64::new(0.0, 0.0); orders])
    }

    /// Builds a spectrum from sparse `(order, rms, angle)` triples.
    pub fn from_polar(
        fundamental_hz: f64,
        unit: Unit,
        orders: usize,
        terms: &[(usize, f64, f64)],
    ) -> Result<Self> {
        let mut p = vec![Complex64::new(0.0, 0.0); orders];
        for &(h, rms, angle) in terms {
            if h == 0 || h > orders {
                return Err(Error::invalid(alloc::format!(
                    "order {h} outside 1..={orders}"
                )));
            }
            p[h - 1] += Complex64::from_polar(rms, angle);
        }
        Self::new(fundamental_hz, unit, p)
    }

    pub fn phasors(&self) -> &[Complex64] {
        &self.phasors
    }

    pub fn into_phasors(self) -> Vec<Complex64> {
        self.phasors
    }

    /// Highest stored order.
    pub fn len(&self) -> usize {
        self.phasors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phasors.is_empty()
    }

    /// Phasor of order `h` (1-based); zero beyond the stored range.
    pub fn order(&self, h: usize) -> Complex64 {
        if h == 0 {
            return Complex64::new(0.0, 0.0);
        }
        self.phasors.get(h - 1).copied().unwrap_or_default()
    }

    pub fn fundamental(&self) -> Complex64 {
        self.phasors[0]
    }

    /// Mean square of the corresponding time signal.
    pub fn mean_square(&self) -> f64 {
        self.phasors.iter().map(|p| p.norm_sqr()).sum()
    }

    /// Copy truncated or zero-padded to `orders` entries.
    pub fn resized(&self, orders: usize) -> Result<Self> {
        let mut p = self.phasors.clone();
        p.resize(orders, Complex64::new(0.0, 0.0));
        Self::new(self.fundamental_hz, self.unit, p)
    }

    /// Rotates order `h` by `h * shift` radians of fundamental phase. A
    /// signal delayed by `delta` seconds corresponds to
    /// `shift = -w0 * delta`.
    pub fn rotated(&self, shift: f64) -> Self {
        let phasors = self
            .phasors
            .iter()
            .enumerate()
            .map(|(k, p)| p * Complex64::from_polar(1.0, (k + 1) as f64 * shift))
            .collect();
        Self {
            fundamental_hz: self.fundamental_hz,
            unit: self.unit,
            phasors,
        }
    }

    /// Evaluates the sine series at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let w0 = TAU * self.fundamental_hz;
        self.phasors
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let h = (k + 1) as f64;
                SQRT_2 * p.norm() * math::sin(h * w0 * t + p.arg())
            })
            .sum()
    }
}

/// Samples the sine series of `spectrum` for `duration` seconds.
pub fn synthesize(
    spectrum: &HarmonicSpectrum,
    duration: f64,
    sample_rate: f64,
) -> Result<SampledWaveform> {
    let f0 = spectrum.fundamental_hz;
    let highest_order = spectrum.len();
    if !(sample_rate > 2.0 * f0 * highest_order as f64) {
        let highest = math::ceil(sample_rate / (2.0 * f0)) as usize;
        return Err(Error::Nyquist {
            sample_rate,
            requested: highest_order,
            highest: highest.saturating_sub(1),
        });
    }
    if !(duration >= 0.0) {
        return Err(Error::invalid("duration must be non-negative"));
    }
    let n = math::round(duration * sample_rate) as usize;
    let samples = (0..n)
        .map(|k| spectrum.value_at(k as f64 / sample_rate))
        .collect();
    let name = match spectrum.unit {
        Unit::Volt => "v",
        Unit::Ampere => "i",
    };
    let mut w = SampledWaveform::new(sample_rate, f0);
    w.channels.push(Channel {
        name: name.into(),
        unit: spectrum.unit,
        samples,
    });
    Ok(w)
}

/// Total harmonic distortion `sqrt(sum_{h>=2} |p_h|^2) / |p_1|`.
pub fn thd(spectrum: &HarmonicSpectrum) -> Result<f64> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let fund = spectrum.fundamental().norm();
    if fund == 0.0 {
        return Err(Error::ZeroFundamental("THD"));
    }
    let harm: f64 = spectrum.phasors()[1..].iter().map(|p| p.norm_sqr()).sum();
    Ok(math::sqrt(harm) / fund)
}

/// Per-harmonic active power `P_h = V_h I_h cos(theta_h - phi_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicPower {
    /// `per_order[h - 1]` is `P_h` in watts.
    pub per_order: Vec<f64>,
    pub total: f64,
}

impl HarmonicPower {
    pub fn fundamental(&self) -> f64 {
        self.per_order.first().copied().unwrap_or(0.0)
    }

    /// `P_2 + ... + P_min(M,N)`.
    pub fn harmonic(&self) -> f64 {
        self.per_order.iter().skip(1).sum()
    }
}

pub fn average_power(v: &HarmonicSpectrum, i: &HarmonicSpectrum) -> Result<HarmonicPower> {
    if v.fundamental_hz != i.fundamental_hz {
        return Err(Error::FundamentalMismatch(v.fundamental_hz, i.fundamental_hz));
    }
    let per_order: Vec<f64> = v
        .phasors()
        .iter()
        .zip(i.phasors())
        .map(|(vp, ip)| (vp * ip.conj()).re)
        .collect();
    let total = per_order.iter().sum();
    Ok(HarmonicPower { per_order, total })
}

/// Harmonic (parasitic) active power relative to the fundamental, signed.
pub fn parasitic_power_ratio(v: &HarmonicSpectrum, i: &HarmonicSpectrum) -> Result<f64> {
    let p = average_power(v, i)?;
    let p1 = p.fundamental();
    if p1 == 0.0 {
        return Err(Error::ZeroFundamental("parasitic power ratio"));
    }
    Ok(p.harmonic() / p1)
}
