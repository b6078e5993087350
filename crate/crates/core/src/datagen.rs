//! Load-combination cases, impedance-gain sweeps and measurement points.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::circuits::{
    build_house_with, equivalent_supply, meter_config, simulate, HouseParams, Netlist,
    SimulationConfig, SteadyStateCriterion, METER_CHANNELS,
};
use crate::harmonics::{align_phase_reference, dft_harmonics, esprit_harmonics};
use crate::signal::{ChannelView, HarmonicSpectrum, SampledWaveform, Unit};
use crate::{Error, Result};

/// Which end-use devices have their breaker closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LoadCombination {
    pub desktop: bool,
    pub laptop: bool,
    pub vfd: bool,
    pub pv: bool,
}

impl LoadCombination {
    pub const NONE: Self = Self {
        desktop: false,
        laptop: false,
        vfd: false,
        pv: false,
    };
    pub const ALL: Self = Self {
        desktop: true,
        laptop: true,
        vfd: true,
        pv: true,
    };

    /// Bit 0 desktop, bit 1 laptop, bit 2 VFD, bit 3 PV.
    pub fn bits(self) -> u8 {
        self.desktop as u8 | (self.laptop as u8) << 1 | (self.vfd as u8) << 2 | (self.pv as u8) << 3
    }

    pub fn from_bits(bits: u8) -> Self {
        Self {
            desktop: bits & 1 != 0,
            laptop: bits & 2 != 0,
            vfd: bits & 4 != 0,
            pv: bits & 8 != 0,
        }
    }

    /// Case number of this combination.
    pub fn case_id(self) -> Option<u8> {
        (1..=16).find(|&c| case_to_loads(c).is_ok_and(|l| l == self))
    }

    pub fn has_rectifier(self) -> bool {
        self.desktop || self.laptop || self.vfd
    }

    pub fn is_empty(self) -> bool {
        self.bits() == 0
    }
}

/// Maps a case number to its loads.
///
/// Cases 1-8 have PV with desktop, laptop and VFD enumerated in binary order
/// (desktop least significant); cases 9-12 have the VFD without PV; cases
/// 13-16 have neither, running desktop, laptop, both, and finally none.
pub fn case_to_loads(case_id: u8) -> Result<LoadCombination> {
    let (base, index) = match case_id {
        1..=8 => (8u8, case_id - 1),
        9..=12 => (4, case_id - 9),
        13..=16 => (0, case_id - 13),
        _ => return Err(Error::invalid(format!("case id must be in 1..=16, got {case_id}"))),
    };
    if base == 0 {
        // Group iii starts at desktop-only and wraps so the last case is empty.
        return Ok(LoadCombination::from_bits((index + 1) % 4));
    }
    Ok(LoadCombination::from_bits(base | index))
}

/// Harmonic extraction applied to the recorded meter channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase", tag = "method"))]
pub enum Extraction {
    /// Exact-bin DFT over the recorded whole cycles.
    Dft,
    /// ESPRIT on the block-averaged channel.
    Esprit { decimation: usize },
}

impl Extraction {
    /// ESPRIT decimation giving 140 samples per fundamental cycle at the
    /// default step.
    pub const DEFAULT_ESPRIT: Self = Extraction::Esprit { decimation: 120 };

    pub fn name(self) -> &'static str {
        match self {
            Extraction::Dft => "dft",
            Extraction::Esprit { .. } => "esprit",
        }
    }

    /// Spectrum of one channel with orders `1..=orders`.
    pub fn extract(self, view: ChannelView<'_>, orders: usize) -> Result<HarmonicSpectrum> {
        match self {
            Extraction::Dft => dft_harmonics(view, orders),
            Extraction::Esprit { decimation } => Ok(esprit_harmonics(view, orders, decimation)?.spectrum),
        }
    }
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepConfig {
    pub house: HouseParams,
    pub steps_per_cycle: usize,
    pub max_sim_time: f64,
    pub steady_state: SteadyStateCriterion,
    pub extraction: Extraction,
    /// Current harmonic count M.
    pub current_orders: usize,
    /// Voltage harmonic count N.
    pub voltage_orders: usize,
    pub alpha_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let sim = SimulationConfig::new(Vec::new());
        Self {
            house: HouseParams::default(),
            steps_per_cycle: sim.steps_per_cycle,
            max_sim_time: sim.max_sim_time,
            steady_state: sim.steady_state,
            extraction: Extraction::Dft,
            current_orders: DEFAULT_ORDERS,
            voltage_orders: DEFAULT_ORDERS,
            alpha_grid: alpha_grid(1.0, 10.0, DEFAULT_POINTS).unwrap_or_default(),
        }
    }
}

impl SweepConfig {
    pub fn fundamental_hz(&self) -> f64 {
        self.house.supply.fundamental_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.fundamental_hz() * self.steps_per_cycle as f64)
    }

    /// Recording configuration for a house netlist built from this config.
    pub fn simulation(&self, netlist: &Netlist) -> SimulationConfig {
        let mut sim = meter_config(netlist);
        sim.fundamental_hz = self.fundamental_hz();
        sim.steps_per_cycle = self.steps_per_cycle;
        sim.max_sim_time = self.max_sim_time;
        sim.steady_state = self.steady_state.clone();
        sim
    }

    pub fn validate(&self) -> Result<()> {
        if self.current_orders == 0 || self.voltage_orders == 0 {
            return Err(Error::invalid("harmonic counts must be positive"));
        }
        check_grid(&self.alpha_grid)
    }
}

pub const DEFAULT_ORDERS: usize = 25;
pub const DEFAULT_POINTS: usize = 19;

/// `points` impedance gains spaced uniformly on `[start, end]`.
pub fn alpha_grid(start: f64, end: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(start.is_finite() && end.is_finite()) {
        return Err(Error::invalid("alpha grid needs at least one point and finite ends"));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    if !(end > start) {
        return Err(Error::invalid("alpha grid end must exceed its start"));
    }
    let step = (end - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| if k + 1 == points { end } else { start + step * k as f64 })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return Err(Error::invalid("alpha grid is empty")),
        Some(&a) if a != 1.0 => {
            return Err(Error::invalid(format!("alpha grid must start at 1, starts at {a}")))
        }
        _ => {}
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("alpha grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Where a measurement came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    /// Raw waveform file, when one was written.
    pub waveform: Option<String>,
    /// Extraction method name.
    pub method: String,
}

/// Phase-aligned equivalent supply harmonics for one case and gain.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPoint {
    pub case_id: u8,
    pub alpha_imp: f64,
    /// Equivalent voltage, orders `1..=N`, fundamental angle zero.
    pub v: HarmonicSpectrum,
    /// Equivalent current, orders `1..=M`.
    pub i: HarmonicSpectrum,
    pub provenance: Provenance,
    /// Free-form tags such as the settling time.
    pub meta: BTreeMap<String, String>,
}

impl MeasurementPoint {
    pub fn validate(&self) -> Result<()> {
        if self.v.fundamental_hz != self.i.fundamental_hz {
            return Err(Error::FundamentalMismatch(self.v.fundamental_hz, self.i.fundamental_hz));
        }
        if self.v.unit != Unit::Volt || self.i.unit != Unit::Ampere {
            return Err(Error::invalid("measurement needs a voltage and a current spectrum"));
        }
        if self.v.fundamental().im != 0.0 || self.v.fundamental().re < 0.0 {
            return Err(Error::invalid(format!(
                "case {} at alpha {}: voltage fundamental is not phase aligned",
                self.case_id, self.alpha_imp
            )));
        }
        case_to_loads(self.case_id).map(|_| ())
    }
}

/// Ordered measurements plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SweepConfig,
    pub points: Vec<MeasurementPoint>,
}

impl Dataset {
    /// Sorts `points` by (case, alpha) and checks the dataset invariants.
    pub fn new(config: SweepConfig, mut points: Vec<MeasurementPoint>) -> Result<Self> {
        points.sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.alpha_imp.total_cmp(&b.alpha_imp)));
        let d = Self { config, points };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let f0 = self.config.fundamental_hz();
        for p in &self.points {
            p.validate()?;
            if p.v.len() != self.config.voltage_orders || p.i.len() != self.config.current_orders {
                return Err(Error::invalid(format!(
                    "case {} at alpha {}: expected {} voltage and {} current orders, got {} and {}",
                    p.case_id,
                    p.alpha_imp,
                    self.config.voltage_orders,
                    self.config.current_orders,
                    p.v.len(),
                    p.i.len()
                )));
            }
            if p.v.fundamental_hz != f0 {
                return Err(Error::FundamentalMismatch(f0, p.v.fundamental_hz));
            }
        }
        for w in self.points.windows(2) {
            if w[0].case_id == w[1].case_id && w[0].alpha_imp == w[1].alpha_imp {
                return Err(Error::invalid(format!(
                    "duplicate measurement for case {} at alpha {}",
                    w[0].case_id, w[0].alpha_imp
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of one case in alpha order.
    pub fn case(&self, case_id: u8) -> Vec<MeasurementPoint> {
        self.points.iter().filter(|p| p.case_id == case_id).cloned().collect()
    }
}

/// Simulates one case at one gain and reduces the meter channels to a
/// measurement. The recorded waveform is returned alongside.
pub fn measure(case_id: u8, alpha_imp: f64, config: &SweepConfig) -> Result<(MeasurementPoint, SampledWaveform)> {
    let wrap = |e: Error| Error::SweepPoint {
        case: case_id,
        alpha: alpha_imp,
        source: Box::new(e),
    };
    let loads = case_to_loads(case_id)?;
    let netlist = build_house_with(&config.house, loads, alpha_imp).map_err(wrap)?;
    let waveform = simulate(&netlist, &config.simulation(&netlist)).map_err(wrap)?;
    let point = reduce(case_id, alpha_imp, &waveform, config).map_err(wrap)?;
    Ok((point, waveform))
}

/// Extracts, combines and aligns the four meter channels of `waveform`.
pub fn reduce(case_id: u8, alpha_imp: f64, waveform: &SampledWaveform, config: &SweepConfig) -> Result<MeasurementPoint> {
    let orders = config.current_orders.max(config.voltage_orders);
    let mut spectra = Vec::with_capacity(4);
    for name in METER_CHANNELS {
        let view = waveform
            .channel(name)
            .ok_or_else(|| Error::invalid(format!("waveform lacks channel `{name}`")))?;
        spectra.push(config.extraction.extract(view, orders)?);
    }
    let (v, i) = equivalent_supply(&spectra[0], &spectra[1], &spectra[2], &spectra[3])?;
    let (v, i) = align_phase_reference(&v, &i)?;
    let mut meta = BTreeMap::new();
    if let Some(s) = waveform.meta.get("settle_cycles") {
        meta.insert(String::from("settle_cycles"), s.clone());
    }
    Ok(MeasurementPoint {
        case_id,
        alpha_imp,
        v: v.resized(config.voltage_orders)?,
        i: i.resized(config.current_orders)?,
        provenance: Provenance {
            waveform: None,
            method: String::from(config.extraction.name()),
        },
        meta,
    })
}

/// Measures `case_id` at every gain of `config.alpha_grid`, in order.
/// The first failing point aborts the sweep.
pub fn run_sweep(case_id: u8, config: &SweepConfig) -> Result<Dataset> {
    config.validate()?;
    case_to_loads(case_id)?;
    let points = config
        .alpha_grid
        .iter()
        .map(|&a| measure(case_id, a, config).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(config.clone(), points)
}
