use alloc::vec::Vec;

use num_complex::Complex64;

use crate::signal::{HarmonicSpectrum, Unit};
use crate::{Error, Result};

/// Orders whose equivalent voltage is below this fraction of the fundamental
/// fall back to summing the leg currents.
pub const DEGENERATE_VOLTAGE: f64 = 1e-9;

/// Reduces the two legs of a split-phase service to one equivalent supply.
///
/// The equivalent voltage is the mean of the leg voltages. The equivalent
/// current preserves the complex power of both legs at every order:
/// `I = conj((V1 conj(I1) + V2 conj(I2)) / V)`, so that `V conj(I)` equals the
/// summed leg power exactly.
pub fn equivalent_supply(
    v1: &HarmonicSpectrum,
    v2: &HarmonicSpectrum,
    i1: &HarmonicSpectrum,
    i2: &HarmonicSpectrum,
) -> Result<(HarmonicSpectrum, HarmonicSpectrum)> {
    let f0 = v1.fundamental_hz;
    for s in [v2, i1, i2] {
        if s.fundamental_hz != f0 {
            return Err(Error::FundamentalMismatch(f0, s.fundamental_hz));
        }
    }
    let n = v1.len();
    if [v2.len(), i1.len(), i2.len()].iter().any(|&l| l != n) {
        return Err(Error::invalid("leg spectra must have equal length"));
    }
    if v1.unit != Unit::Volt || v2.unit != Unit::Volt || i1.unit != Unit::Ampere || i2.unit != Unit::Ampere {
        return Err(Error::invalid("expected two voltage spectra followed by two current spectra"));
    }
    let veq: Vec<Complex64> = v1
        .phasors()
        .iter()
        .zip(v2.phasors())
        .map(|(a, b)| (a + b) * 0.5)
        .collect();
    let v_fund = veq[0].norm();
    if v_fund == 0.0 {
        return Err(Error::ZeroFundamental("equivalent voltage"));
    }
    let ieq: Vec<Complex64> = (0..n)
        .map(|k| {
            let (a, b) = (i1.phasors()[k], i2.phasors()[k]);
            let v = veq[k];
            if v.norm() < DEGENERATE_VOLTAGE * v_fund {
                a + b
            } else {
                let s = v1.phasors()[k] * a.conj() + v2.phasors()[k] * b.conj();
                (s / v).conj()
            }
        })
        .collect();
    Ok((
        HarmonicSpectrum::new(f0, Unit::Volt, veq)?,
        HarmonicSpectrum::new(f0, Unit::Ampere, ieq)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::average_power;

    fn spec(unit: Unit, p: &[Complex64]) -> HarmonicSpectrum {
        HarmonicSpectrum::new(60.0, unit, p.to_vec()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identical_legs_sum_currents() {
        let v = spec(Unit::Volt, &[c(120.0, 0.0)]);
        let (veq, ieq) = equivalent_supply(
            &v,
            &v,
            &spec(Unit::Ampere, &[c(10.0, 0.0)]),
            &spec(Unit::Ampere, &[c(5.0, 0.0)]),
        )
        .unwrap();
        assert!((veq.order(1) - c(120.0, 0.0)).norm() < 1e-12);
        assert!((ieq.order(1) - c(15.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unequal_legs_preserve_power() {
        let (veq, ieq) = equivalent_supply(
            &spec(Unit::Volt, &[c(120.0, 0.0)]),
            &spec(Unit::Volt, &[c(118.0, 0.0)]),
            &spec(Unit::Ampere, &[c(10.0, 0.0)]),
            &spec(Unit::Ampere, &[c(0.0, 0.0)]),
        )
        .unwrap();
        assert!((veq.order(1) - c(119.0, 0.0)).norm() < 1e-12);
        assert!((ieq.order(1) - c(1200.0 / 119.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn random_legs_preserve_total_power() {
        let mut seed = 11u64;
        let mut r = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..50 {
            let mk = |unit, scale: f64, r: &mut dyn FnMut() -> f64| {
                let p: Vec<Complex64> = (0..9).map(|h| c(r(), r()) * scale / (h as f64 + 1.0)).collect();
                spec(unit, &p)
            };
            let v1 = mk(Unit::Volt, 120.0, &mut r);
            let v2 = mk(Unit::Volt, 120.0, &mut r);
            let i1 = mk(Unit::Ampere, 10.0, &mut r);
            let i2 = mk(Unit::Ampere, 10.0, &mut r);
            let (veq, ieq) = equivalent_supply(&v1, &v2, &i1, &i2).unwrap();
            let legs = average_power(&v1, &i1).unwrap().total + average_power(&v2, &i2).unwrap().total;
            let eq = average_power(&veq, &ieq).unwrap().total;
            let scale: f64 = average_power(&v1, &i1).unwrap().per_order.iter().map(|p| p.abs()).sum::<f64>()
                + average_power(&v2, &i2).unwrap().per_order.iter().map(|p| p.abs()).sum::<f64>();
            assert!((legs - eq).abs() <= 1e-9 * scale, "{legs} vs {eq}");
        }
    }

    #[test]
    fn degenerate_order_sums_currents() {
        let (_, ieq) = equivalent_supply(
            &spec(Unit::Volt, &[c(120.0, 0.0), c(1.0, 0.0)]),
            &spec(Unit::Volt, &[c(120.0, 0.0), c(-1.0, 0.0)]),
            &spec(Unit::Ampere, &[c(1.0, 0.0), c(0.5, 0.1)]),
            &spec(Unit::Ampere, &[c(1.0, 0.0), c(0.25, 0.0)]),
        )
        .unwrap();
        assert!((ieq.order(2) - c(0.75, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn zero_voltage_is_rejected() {
        let z = spec(Unit::Volt, &[c(0.0, 0.0)]);
        let i = spec(Unit::Ampere, &[c(1.0, 0.0)]);
        assert_eq!(
            equivalent_supply(&z, &z, &i, &i).unwrap_err(),
            Error::ZeroFundamental("equivalent voltage")
        );
    }
}
