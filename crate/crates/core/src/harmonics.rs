//! Harmonic phasor extraction.
//!
//! Two independent routes are provided. [`dft_harmonics`] evaluates the
//! exact-bin discrete Fourier coefficients of a leakage-free record and is
//! the default for simulator output. [`esprit_lines`] estimates spectral lines
//! by subspace rotational invariance: a Hankel data matrix is factored, the
//! shift-invariance relation of its signal subspace yields the poles, and
//! amplitudes follow from a Vandermonde least-squares fit against the samples.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::{self, CMatrix};
use crate::math::{self, PI, SQRT_2, TAU};
use crate::signal::{ChannelView, HarmonicSpectrum};
use crate::{Error, Result};

/// Relative singular-value floor for the ESPRIT signal subspace.
pub const SUBSPACE_FLOOR: f64 = 1e-10;

/// One estimated spectral line in the sine/RMS convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    /// Hertz, non-negative.
    pub frequency: f64,
    /// RMS amplitude in the unit of the source channel.
    pub amplitude: f64,
    /// Phase in (-pi, pi] of `sqrt(2) * A * sin(2 pi f t + phase)`, referred to t = 0.
    pub phase: f64,
    /// Decay rate in 1/s; zero for a stationary line.
    pub damping: f64,
}

impl SpectralLine {
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

fn integral_period(view: &ChannelView<'_>) -> Result<usize> {
    let spp = view.sample_rate / view.fundamental_hz;
    let p = math::round(spp);
    if p < 1.0 || (spp - p).abs() > 1e-9 * spp {
        return Err(Error::NonIntegerPeriods {
            len: view.samples.len(),
            per_period: spp,
        });
    }
    let p = p as usize;
    if view.samples.is_empty() || !view.samples.len().is_multiple_of(p) {
        return Err(Error::NonIntegerPeriods {
            len: view.samples.len(),
            per_period: spp,
        });
    }
    Ok(p)
}

/// Exact-bin DFT phasors for orders `1..=max_order`.
pub fn dft_harmonics(view: ChannelView<'_>, max_order: usize) -> Result<HarmonicSpectrum> {
    if max_order == 0 {
        return Err(Error::invalid("max_order must be at least 1"));
    }
    let period = integral_period(&view)?;
    if 2 * max_order >= period {
        return Err(Error::Nyquist {
            sample_rate: view.sample_rate,
            requested: max_order,
            highest: (period - 1) / 2,
        });
    }
    let table: Vec<(f64, f64)> = (0..period)
        .map(|m| {
            let a = TAU * m as f64 / period as f64;
            (math::cos(a), math::sin(a))
        })
        .collect();
    let len = view.samples.len();
    let scale = 2.0 / len as f64;
    let w0 = TAU * view.fundamental_hz;
    let phasors = (1..=max_order)
        .map(|h| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &x in view.samples {
                let (c, s) = table[idx];
                re += x * c;
                im -= x * s;
                idx += h;
                if idx >= period {
                    idx -= period;
                }
            }
            // The sum above is referred to the first sample; move it to t = 0.
            let coeff = Complex64::new(re * scale, im * scale)
                * Complex64::from_polar(1.0, -(h as f64) * w0 * view.start_time);
            Complex64::new(0.0, 1.0) * coeff / SQRT_2
        })
        .collect();
    HarmonicSpectrum::new(view.fundamental_hz, view.unit, phasors)
}

/// ESPRIT line estimation with `model_order` complex exponentials.
pub fn esprit_lines(view: ChannelView<'_>, model_order: usize) -> Result<Vec<SpectralLine>> {
    let x = view.samples;
    let len = x.len();
    if model_order == 0 {
        return Err(Error::invalid("model order must be positive"));
    }
    if model_order > len {
        return Err(Error::invalid(alloc::format!(
            "model order {model_order} exceeds the {len} available samples"
        )));
    }
    if len < 4 * model_order {
        return Err(Error::invalid(alloc::format!(
            "{len} samples are fewer than 4 x model order ({model_order})"
        )));
    }
    let rows = len / 2;
    let cols = len - rows + 1;
    let hankel = DMatrix::from_fn(rows, cols, |i, j| x[i + j]);
    let svd = linalg::svd(&hankel);
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    if !(sigma_max > 0.0) {
        return Ok(Vec::new());
    }
    let rank = svd
        .s
        .iter()
        .take_while(|&&s| s > SUBSPACE_FLOOR * sigma_max)
        .count()
        .min(model_order);
    let signal = svd.u.columns(0, rank);

    let upper = CMatrix::from_fn(rows - 1, rank, |i, j| Complex64::new(signal[(i, j)], 0.0));
    let lower = CMatrix::from_fn(rows - 1, rank, |i, j| Complex64::new(signal[(i + 1, j)], 0.0));
    let pinv = linalg::pseudo_inverse(&upper, SUBSPACE_FLOOR);
    if pinv.rank < rank {
        return Err(Error::RankDeficient {
            achieved: pinv.rank,
            required: rank,
        });
    }
    let rotation = &pinv.matrix * lower;
    let rotation = DMatrix::from_fn(rank, rank, |i, j| rotation[(i, j)].re);
    let poles: Vec<Complex64> = rotation.complex_eigenvalues().iter().copied().collect();

    // Amplitudes: least squares against the raw samples.
    let mut vander = CMatrix::zeros(len, poles.len());
    for (j, &z) in poles.iter().enumerate() {
        let mut zk = Complex64::new(1.0, 0.0);
        for k in 0..len {
            vander[(k, j)] = zk;
            zk *= z;
        }
    }
    let rhs = CMatrix::from_fn(len, 1, |k, _| Complex64::new(x[k], 0.0));
    let amps = linalg::pseudo_inverse(&vander, SUBSPACE_FLOOR).matrix * rhs;

    let fs = view.sample_rate;
    let eps = 1e-9;
    let mut lines = Vec::new();
    for (j, &z) in poles.iter().enumerate() {
        let c = amps[(j, 0)];
        let omega = z.arg();
        let damping = -math::ln(z.norm()) * fs;
        if omega.abs() <= eps {
            let value = c.re;
            lines.push(SpectralLine {
                frequency: 0.0,
                amplitude: value.abs(),
                phase: if value >= 0.0 { PI / 2.0 } else { -PI / 2.0 },
                damping,
            });
        } else if omega > eps && omega < PI - eps {
            let freq = omega * fs / TAU;
            let phase = c.arg() + PI / 2.0 - TAU * freq * view.start_time;
            lines.push(SpectralLine {
                frequency: freq,
                amplitude: SQRT_2 * c.norm(),
                phase: math::wrap_angle(phase),
                damping,
            });
        }
    }
    lines.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(lines)
}

/// Result of snapping spectral lines onto the harmonic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LineAssignment {
    pub spectrum: HarmonicSpectrum,
    /// Lines that fell outside every harmonic bin.
    pub residuals: Vec<SpectralLine>,
}

pub fn lines_to_spectrum(
    lines: &[SpectralLine],
    f0: f64,
    max_order: usize,
    rel_tol: f64,
    unit: crate::signal::Unit,
) -> Result<LineAssignment> {
    if max_order == 0 || !(rel_tol >= 0.0 && rel_tol < 0.5 / max_order as f64) {
        return Err(Error::invalid(alloc::format!(
            "rel_tol {rel_tol} must lie in [0, 0.5/{max_order}) so bins cannot overlap"
        )));
    }
    let mut phasors = vec![Complex64::new(0.0, 0.0); max_order];
    let mut residuals = Vec::new();
    for line in lines {
        let h = math::round(line.frequency / f0);
        let centre = h * f0;
        if h >= 1.0 && h <= max_order as f64 && (line.frequency - centre).abs() <= rel_tol * centre {
            phasors[h as usize - 1] += line.phasor();
        } else {
            residuals.push(*line);
        }
    }
    Ok(LineAssignment {
        spectrum: HarmonicSpectrum::new(f0, unit, phasors)?,
        residuals,
    })
}

/// Block-averages `factor` samples at a time.
///
/// Returns the decimated samples and the effective start time (the centre of
/// the first block). A sinusoid at `f` passes with real gain
/// [`block_average_gain`] and no phase shift relative to the block centres.
pub fn block_average(view: ChannelView<'_>, factor: usize) -> (Vec<f64>, f64) {
    let out = view
        .samples
        .chunks_exact(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect();
    let start = view.start_time + (factor as f64 - 1.0) / (2.0 * view.sample_rate);
    (out, start)
}

pub fn block_average_gain(freq: f64, sample_rate: f64, factor: usize) -> f64 {
    let x = PI * freq / sample_rate;
    if x == 0.0 {
        return 1.0;
    }
    math::sin(x * factor as f64) / (factor as f64 * math::sin(x))
}

/// ESPRIT route to a harmonic spectrum: optional block-average decimation,
/// line estimation with `2 * max_order` exponentials, bin snapping and
/// decimation-gain correction.
pub fn esprit_harmonics(
    view: ChannelView<'_>,
    max_order: usize,
    decimation: usize,
) -> Result<LineAssignment> {
    let decimation = decimation.max(1);
    let (samples, start) = if decimation > 1 {
        block_average(view, decimation)
    } else {
        (view.samples.to_vec(), view.start_time)
    };
    let dec_view = ChannelView {
        samples: &samples,
        sample_rate: view.sample_rate / decimation as f64,
        start_time: start,
        ..view
    };
    let lines = esprit_lines(dec_view, 2 * max_order)?;
    let tol = 0.25 / max_order as f64;
    let mut assigned = lines_to_spectrum(&lines, view.fundamental_hz, max_order, tol, view.unit)?;
    if decimation > 1 {
        let corrected = assigned
            .spectrum
            .phasors()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let g = block_average_gain((k + 1) as f64 * view.fundamental_hz, view.sample_rate, decimation);
                p / g
            })
            .collect();
        assigned.spectrum = HarmonicSpectrum::new(view.fundamental_hz, view.unit, corrected)?;
    }
    Ok(assigned)
}

/// Rotates both spectra by the time shift that zeroes the voltage
/// fundamental angle (order `h` is multiplied by `exp(-j h theta_1)`).
pub fn align_phase_reference(
    v: &HarmonicSpectrum,
    i: &HarmonicSpectrum,
) -> Result<(HarmonicSpectrum, HarmonicSpectrum)> {
    if v.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let fund = v.fundamental();
    if fund.norm() == 0.0 {
        return Err(Error::ZeroFundamental("phase alignment"));
    }
    let theta = fund.arg();
    let mut va = v.rotated(-theta);
    // Pin the reference exactly; rotation leaves round-off in the imaginary part.
    let mut p = va.clone().into_phasors();
    p[0] = Complex64::new(fund.norm(), 0.0);
    va = HarmonicSpectrum::new(v.fundamental_hz, v.unit, p)?;
    Ok((va, i.rotated(-theta)))
}
