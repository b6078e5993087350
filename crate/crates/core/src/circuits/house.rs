use alloc::format;
use alloc::vec::Vec;

use super::netlist::{Controller, Gate, InverterControl, Netlist, NodeId, Pwm, SourceWaveform, GROUND};
use super::solver::{ChannelSpec, SimulationConfig};
use crate::datagen::LoadCombination;
use crate::math::TAU;
use crate::{Error, Result};

/// Series source impedance referred to the 240 V side, scaled by the
/// impedance gain on the primary.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupplyParams {
    pub primary_rms: f64,
    pub leg_rms: f64,
    pub fundamental_hz: f64,
    /// Resistance referred to 240 V in ohms.
    pub resistance: f64,
    /// Reactance at the fundamental referred to 240 V in ohms.
    pub reactance: f64,
}

impl Default for SupplyParams {
    fn default() -> Self {
        Self {
            primary_rms: 7200.0,
            leg_rms: 120.0,
            fundamental_hz: 60.0,
            resistance: 0.18,
            reactance: 0.0377,
        }
    }
}

/// Series choke plus shunt capacitor and bleeder at a device's terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputFilter {
    pub inductance: f64,
    pub capacitance: f64,
    pub resistance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesktopParams {
    pub filter: InputFilter,
    pub dc_capacitance: f64,
    pub dc_precharge: f64,
    pub pwm_hz: f64,
    pub duty: f64,
    pub output_inductance: f64,
    pub output_capacitance: f64,
    pub output_voltage: f64,
    pub rated_watts: f64,
}

impl Default for DesktopParams {
    fn default() -> Self {
        Self {
            filter: InputFilter {
                inductance: 12e-3,
                capacitance: 0.22e-6,
                resistance: 550e3,
            },
            dc_capacitance: 10e-6,
            dc_precharge: 130.0,
            pwm_hz: 6000.0,
            duty: 10.0 / 130.0,
            output_inductance: 100e-6,
            output_capacitance: 2200e-6,
            output_voltage: 10.0,
            rated_watts: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaptopParams {
    pub filter: InputFilter,
    pub dc_capacitance: f64,
    pub dc_precharge: f64,
    pub pwm_hz: f64,
    pub duty: f64,
    /// Series inrush limiter between the filter and the bridge.
    pub inrush_resistance: f64,
    pub magnetizing_inductance: f64,
    /// Primary-to-secondary turns ratio.
    pub turns_ratio: f64,
    pub output_capacitance: f64,
    pub output_voltage: f64,
    pub rated_watts: f64,
}

impl Default for LaptopParams {
    fn default() -> Self {
        Self {
            filter: InputFilter {
                inductance: 12e-3,
                capacitance: 0.33e-6,
                resistance: 4000e3,
            },
            dc_capacitance: 10e-6,
            dc_precharge: 155.0,
            pwm_hz: 900.0,
            duty: 0.36,
            inrush_resistance: 5.0,
            magnetizing_inductance: 21e-3,
            turns_ratio: 6.0,
            output_capacitance: 2200e-6,
            output_voltage: 20.0,
            rated_watts: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VfdParams {
    pub filter: InputFilter,
    pub dc_inductance: f64,
    pub dc_resistance: f64,
    pub dc_capacitance: f64,
    pub dc_voltage: f64,
    pub rated_watts: f64,
    /// Fraction of the DC voltage below which the sink turns resistive.
    pub clamp_fraction: f64,
    /// Low-pass time constant of the sink's voltage sensing.
    pub sense_time_constant: f64,
}

impl Default for VfdParams {
    fn default() -> Self {
        Self {
            filter: InputFilter {
                inductance: 12e-3,
                capacitance: 0.22e-6,
                resistance: 550e3,
            },
            dc_inductance: 3e-3,
            dc_resistance: 0.1,
            dc_capacitance: 2200e-6,
            dc_voltage: 205.0,
            rated_watts: 3000.0,
            clamp_fraction: 0.2,
            sense_time_constant: 20e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PvParams {
    pub filter: InputFilter,
    /// Nominal DC link voltage assumed by the modulator.
    pub dc_voltage: f64,
    /// Array open-circuit voltage and source resistance.
    pub array_voltage: f64,
    pub array_resistance: f64,
    pub dc_capacitance: f64,
    pub carrier_hz: f64,
    pub export_watts: f64,
    pub kp: f64,
    pub dead_time: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            filter: InputFilter {
                inductance: 0.9e-3,
                capacitance: 12e-6,
                resistance: 550e3,
            },
            dc_voltage: 400.0,
            array_voltage: 450.0,
            array_resistance: 4.0,
            dc_capacitance: 2.8e-3,
            carrier_hz: 3600.0,
            export_watts: 5000.0,
            kp: 2.0,
            dead_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HouseParams {
    pub supply: SupplyParams,
    pub desktop: DesktopParams,
    pub laptop: LaptopParams,
    pub vfd: VfdParams,
    pub pv: PvParams,
}

impl HouseParams {
    /// Sum of device ratings in `loads`, with PV export counted negative.
    pub fn rated_power(&self, loads: LoadCombination) -> f64 {
        let mut p = 0.0;
        if loads.desktop {
            p += self.desktop.rated_watts;
        }
        if loads.laptop {
            p += self.laptop.rated_watts;
        }
        if loads.vfd {
            p += self.vfd.rated_watts;
        }
        if loads.pv {
            p -= self.pv.export_watts;
        }
        p
    }
}

/// Meter channel names in recording order.
pub const METER_CHANNELS: [&str; 4] = ["v_s1", "v_s2", "i_s1", "i_s2"];

/// Netlist of one house at impedance gain `alpha_imp` with default parameters.
pub fn build_house(loads: LoadCombination, alpha_imp: f64) -> Result<Netlist> {
    build_house_with(&HouseParams::default(), loads, alpha_imp)
}

pub fn build_house_with(params: &HouseParams, loads: LoadCombination, alpha_imp: f64) -> Result<Netlist> {
    if !(alpha_imp >= 1.0 && alpha_imp.is_finite()) {
        return Err(Error::invalid(format!("impedance gain must be >= 1, got {alpha_imp}")));
    }
    let s = &params.supply;
    let mut n = Netlist::new();
    n.alpha_imp = alpha_imp;
    n.case_id = loads.case_id();

    let src = n.node("hv_src");
    let mid = n.node("hv_mid");
    let hv = n.node("hv");
    n.source(
        "V_grid",
        src,
        GROUND,
        SourceWaveform::Sine {
            rms: s.primary_rms,
            frequency: s.fundamental_hz,
            phase: 0.0,
        },
    );
    // Referred from 240 V to the primary.
    let turns = s.primary_rms / (2.0 * s.leg_rms);
    let refer = turns * turns;
    n.resistor("R_s", src, mid, s.resistance * alpha_imp * refer);
    n.inductor(
        "L_s",
        mid,
        hv,
        s.reactance / (TAU * s.fundamental_hz) * alpha_imp * refer,
    );
    let x1 = n.node("x1");
    let x2 = n.node("x2");
    let ratio = s.primary_rms / s.leg_rms;
    n.add("T_1", super::ElementKind::IdealTransformer { ratio }, &[hv, GROUND, x1, GROUND]);
    n.add("T_2", super::ElementKind::IdealTransformer { ratio }, &[hv, GROUND, GROUND, x2]);
    let m1 = n.node("m1");
    let m2 = n.node("m2");
    n.ammeter("A_s1", x1, m1);
    n.ammeter("A_s2", m2, x2);

    if loads.desktop {
        desktop(&mut n, &params.desktop, m1, GROUND);
    }
    if loads.laptop {
        laptop(&mut n, &params.laptop, m2, GROUND);
    }
    if loads.vfd {
        vfd(&mut n, &params.vfd, m1, m2);
    }
    if loads.pv {
        pv(&mut n, &params.pv, m1, m2, s.fundamental_hz);
    }
    n.validate()?;
    Ok(n)
}

/// Recording configuration for the meter channels of a house netlist.
pub fn meter_config(netlist: &Netlist) -> SimulationConfig {
    let node = |name: &str| netlist.find_node(name).expect("house netlist node");
    let elem = |name: &str| netlist.element_index(name).expect("house netlist element");
    SimulationConfig::new(Vec::from([
        ChannelSpec::voltage(METER_CHANNELS[0], node("m1"), GROUND),
        ChannelSpec::voltage(METER_CHANNELS[1], GROUND, node("m2")),
        ChannelSpec::current(METER_CHANNELS[2], elem("A_s1")),
        ChannelSpec::current(METER_CHANNELS[3], elem("A_s2")),
    ]))
}

/// Adds the input filter between `line` and a new node, returning that node.
fn filter(n: &mut Netlist, prefix: &str, f: &InputFilter, line: NodeId, ret: NodeId) -> NodeId {
    let node = n.node(&format!("{prefix}_in"));
    n.inductor(&format!("{prefix}_Lf"), line, node, f.inductance);
    n.capacitor(&format!("{prefix}_Cf"), node, ret, f.capacitance, 0.0);
    n.resistor(&format!("{prefix}_Rf"), node, ret, f.resistance);
    node
}

/// Full-wave diode bridge; returns the (positive, negative) DC rails.
fn bridge(n: &mut Netlist, prefix: &str, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    let p = n.node(&format!("{prefix}_dcp"));
    let m = n.node(&format!("{prefix}_dcn"));
    n.diode(&format!("{prefix}_D1"), a, p);
    n.diode(&format!("{prefix}_D2"), b, p);
    n.diode(&format!("{prefix}_D3"), m, a);
    n.diode(&format!("{prefix}_D4"), m, b);
    (p, m)
}

fn desktop(n: &mut Netlist, d: &DesktopParams, line: NodeId, ret: NodeId) {
    let inp = filter(n, "desk", &d.filter, line, ret);
    let (p, m) = bridge(n, "desk", inp, ret);
    n.capacitor("desk_Cdc", p, m, d.dc_capacitance, d.dc_precharge);
    let pwm = n.add_controller(Controller::Pwm(Pwm {
        frequency: d.pwm_hz,
        duty: d.duty,
        phase_offset: 0.0,
    }));
    let sw = n.node("desk_sw");
    let out = n.node("desk_out");
    n.switch("desk_S", p, sw, Gate { controller: pwm, channel: 0 });
    n.diode("desk_Dfw", m, sw);
    let load = d.output_voltage * d.output_voltage / d.rated_watts;
    let lo = n.inductor("desk_Lo", sw, out, d.output_inductance);
    if let super::ElementKind::Inductor { initial_current, .. } = &mut n.elements[lo].kind {
        *initial_current = d.output_voltage / load;
    }
    n.capacitor("desk_Co", out, m, d.output_capacitance, d.output_voltage);
    n.resistor("desk_Rload", out, m, load);
}

fn laptop(n: &mut Netlist, d: &LaptopParams, line: NodeId, ret: NodeId) {
    let filtered = filter(n, "lap", &d.filter, line, ret);
    let inp = n.node("lap_ntc");
    n.resistor("lap_Rntc", filtered, inp, d.inrush_resistance);
    let (p, m) = bridge(n, "lap", inp, ret);
    n.capacitor("lap_Cdc", p, m, d.dc_capacitance, d.dc_precharge);
    let pwm = n.add_controller(Controller::Pwm(Pwm {
        frequency: d.pwm_hz,
        duty: d.duty,
        phase_offset: 0.0,
    }));
    let drain = n.node("lap_drain");
    let sec = n.node("lap_sec");
    let out = n.node("lap_out");
    n.inductor("lap_Lm", p, drain, d.magnetizing_inductance);
    // Reversed secondary: the output diode blocks while the switch conducts.
    n.add(
        "lap_T",
        super::ElementKind::IdealTransformer { ratio: d.turns_ratio },
        &[p, drain, m, sec],
    );
    n.switch("lap_S", drain, m, Gate { controller: pwm, channel: 0 });
    n.diode("lap_Do", sec, out);
    n.capacitor("lap_Co", out, m, d.output_capacitance, d.output_voltage);
    n.resistor("lap_Rload", out, m, d.output_voltage * d.output_voltage / d.rated_watts);
}

fn vfd(n: &mut Netlist, d: &VfdParams, line: NodeId, ret: NodeId) {
    let inp = filter(n, "vfd", &d.filter, line, ret);
    let (p, m) = bridge(n, "vfd", inp, ret);
    let q = n.node("vfd_choke");
    let r = n.node("vfd_link");
    let l = n.inductor("vfd_Ldc", p, q, d.dc_inductance);
    if let super::ElementKind::Inductor { initial_current, .. } = &mut n.elements[l].kind {
        *initial_current = d.rated_watts / d.dc_voltage;
    }
    n.resistor("vfd_Rdc", q, r, d.dc_resistance);
    n.capacitor("vfd_Cdc", r, m, d.dc_capacitance, d.dc_voltage);
    n.add(
        "vfd_load",
        super::ElementKind::ConstantPowerSink {
            watts: d.rated_watts,
            nominal_voltage: d.dc_voltage,
            clamp_fraction: d.clamp_fraction,
            time_constant: d.sense_time_constant,
        },
        &[r, m],
    );
}

fn pv(n: &mut Netlist, d: &PvParams, line: NodeId, ret: NodeId, f0: f64) {
    let dcp = n.node("pv_dcp");
    let dcn = n.node("pv_dcn");
    let arr = n.node("pv_array");
    n.source("pv_Varray", arr, dcn, SourceWaveform::Dc(d.array_voltage));
    n.resistor("pv_Rarray", arr, dcp, d.array_resistance);
    n.capacitor("pv_Cdc", dcp, dcn, d.dc_capacitance, d.dc_voltage);
    let a = n.node("pv_a");
    let ctrl = n.controllers.len();
    let gate = |channel| Gate { controller: ctrl, channel };
    n.switch("pv_SA_hi", dcp, a, gate(0));
    n.switch("pv_SA_lo", a, dcn, gate(1));
    n.switch("pv_SB_hi", dcp, ret, gate(2));
    n.switch("pv_SB_lo", ret, dcn, gate(3));
    if d.dead_time > 0.0 {
        n.diode("pv_DA_hi", a, dcp);
        n.diode("pv_DA_lo", dcn, a);
        n.diode("pv_DB_hi", ret, dcp);
        n.diode("pv_DB_lo", dcn, ret);
    }
    let lf = n.inductor("pv_Lf", a, line, d.filter.inductance);
    n.capacitor("pv_Cf", line, ret, d.filter.capacitance, 0.0);
    n.resistor("pv_Rf", line, ret, d.filter.resistance);
    n.add_controller(Controller::Inverter(InverterControl {
        carrier_hz: d.carrier_hz,
        fundamental_hz: f0,
        current_rms: d.export_watts / 240.0,
        current_phase: 0.0,
        dc_voltage: d.dc_voltage,
        kp: d.kp,
        filter_inductance: d.filter.inductance,
        dead_time: d.dead_time,
        sense_element: lf,
        sense_nodes: (line, ret),
        grid_rms: 240.0,
    }));
}
