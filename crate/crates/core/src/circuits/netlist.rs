use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, SQRT_2, TAU};
use crate::{Error, Result};

/// Node index; `0` is ground.
pub type NodeId = usize;
pub const GROUND: NodeId = 0;

/// Independent voltage source waveform.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceWaveform {
    Dc(f64),
    /// `sqrt(2) * rms * sin(2 pi f t + phase)`.
    Sine { rms: f64, frequency: f64, phase: f64 },
}

impl SourceWaveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            SourceWaveform::Dc(v) => v,
            SourceWaveform::Sine {
                rms,
                frequency,
                phase,
            } => SQRT_2 * rms * math::sin(TAU * frequency * t + phase),
        }
    }
}

/// Reference to one output channel of a controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub controller: usize,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor {
        ohms: f64,
    },
    Inductor {
        henries: f64,
        initial_current: f64,
    },
    Capacitor {
        farads: f64,
        initial_voltage: f64,
    },
    /// Terminals `[pos, neg]`. A zero-volt source doubles as an ammeter.
    VoltageSource(SourceWaveform),
    /// Terminals `[p+, p-, s+, s-]` with `v_p = ratio * v_s`.
    IdealTransformer {
        ratio: f64,
    },
    /// Terminals `[anode, cathode]`; two-state conductance.
    Diode {
        g_on: f64,
        g_off: f64,
    },
    /// Controller-driven two-state conductance.
    Switch {
        gate: Gate,
        g_on: f64,
        g_off: f64,
    },
    /// Draws `watts / v` from `pos` to `neg`, with `v` low-pass filtered by
    /// `time_constant`. Below `clamp_fraction * nominal_voltage` it degrades to
    /// the resistor that draws rated power at the clamp voltage.
    ConstantPowerSink {
        watts: f64,
        nominal_voltage: f64,
        clamp_fraction: f64,
        time_constant: f64,
    },
}

impl ElementKind {
    pub fn arity(&self) -> usize {
        match self {
            ElementKind::IdealTransformer { .. } => 4,
            _ => 2,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ElementKind::Resistor { .. } => "resistor",
            ElementKind::Inductor { .. } => "inductor",
            ElementKind::Capacitor { .. } => "capacitor",
            ElementKind::VoltageSource(SourceWaveform::Dc(_)) => "dc-source",
            ElementKind::VoltageSource(_) => "voltage-source",
            ElementKind::IdealTransformer { .. } => "ideal-transformer",
            ElementKind::Diode { .. } => "diode",
            ElementKind::Switch { .. } => "gated-switch",
            ElementKind::ConstantPowerSink { .. } => "constant-power-sink",
        }
    }

    fn check(&self) -> core::result::Result<(), &'static str> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        match *self {
            ElementKind::Resistor { ohms } if !positive(ohms) => Err("resistance must be positive"),
            ElementKind::Inductor { henries, .. } if !positive(henries) => {
                Err("inductance must be positive")
            }
            ElementKind::Capacitor { farads, .. } if !positive(farads) => {
                Err("capacitance must be positive")
            }
            ElementKind::IdealTransformer { ratio } if !(ratio.is_finite() && ratio != 0.0) => {
                Err("turns ratio must be finite and non-zero")
            }
            ElementKind::Diode { g_on, g_off } | ElementKind::Switch { g_on, g_off, .. }
                if !(positive(g_on) && positive(g_off) && g_on > g_off) =>
            {
                Err("conductances must be positive with g_on > g_off")
            }
            ElementKind::ConstantPowerSink {
                watts,
                nominal_voltage,
                clamp_fraction,
                time_constant,
            } if !(watts >= 0.0
                && positive(nominal_voltage)
                && positive(clamp_fraction)
                && positive(time_constant)) =>
            {
                Err("constant-power sink parameters out of range")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    pub terminals: Vec<NodeId>,
}

/// Fixed-frequency pulse train, high while `frac((t - phase_offset) * f) < duty`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwm {
    pub frequency: f64,
    pub duty: f64,
    pub phase_offset: f64,
}

impl Pwm {
    /// Time spent high from the phase origin up to `t`, in periods.
    fn cumulative(&self, t: f64) -> f64 {
        let x = (t - self.phase_offset) * self.frequency;
        let whole = math::floor(x);
        whole * self.duty + (x - whole).min(self.duty)
    }

    /// Fraction of `[t0, t1]` during which the pulse is high.
    pub fn on_fraction(&self, t0: f64, t1: f64) -> f64 {
        let span = (t1 - t0) * self.frequency;
        ((self.cumulative(t1) - self.cumulative(t0)) / span).clamp(0.0, 1.0)
    }
}

/// Regularly sampled unipolar sine-PWM current regulator for a full bridge.
///
/// The modulation command is refreshed at every carrier peak and valley from
/// the sensed inductor current at that instant:
/// `v_cmd = v_fund + L di_ref/dt + kp (i_ref - i_sense)`, where `v_fund` is
/// the fundamental of the sensed voltage estimated from its half-period
/// averages over the last cycle. Each device turns on `dead_time` after its
/// leg changes state. Channels 0..4 are leg A upper/lower and leg B
/// upper/lower.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterControl {
    pub carrier_hz: f64,
    pub fundamental_hz: f64,
    /// RMS of the sinusoidal current reference leaving leg A.
    pub current_rms: f64,
    /// Reference phase (sine convention) in radians.
    pub current_phase: f64,
    pub dc_voltage: f64,
    pub kp: f64,
    pub filter_inductance: f64,
    pub dead_time: f64,
    /// Element whose branch current is regulated (an inductor).
    pub sense_element: usize,
    /// Nodes whose difference is fed forward.
    pub sense_nodes: (NodeId, NodeId),
    /// RMS of the sensed voltage assumed before a full cycle has been seen.
    pub grid_rms: f64,
}

impl InverterControl {
    pub fn reference(&self, t: f64) -> (f64, f64) {
        let w = TAU * self.fundamental_hz;
        let a = w * t + self.current_phase;
        let amp = SQRT_2 * self.current_rms;
        (amp * math::sin(a), amp * w * math::cos(a))
    }

    /// Command samples per fundamental cycle.
    pub fn samples_per_cycle(&self) -> usize {
        math::round(2.0 * self.carrier_hz / self.fundamental_hz) as usize
    }

    /// Length of one carrier half period (valley to peak or peak to valley).
    pub fn half_period(&self) -> f64 {
        0.5 / self.carrier_hz
    }

    /// Index of the carrier half period containing `t`; the carrier has a
    /// valley at t = 0 and rises during even half periods.
    pub fn half_period_index(&self, t: f64) -> i64 {
        math::floor(t * 2.0 * self.carrier_hz + 1e-9) as i64
    }

    /// Instant in half period `k` where a leg commanded with modulation `m`
    /// changes state. During a rising half period the upper device is wanted
    /// before this instant; during a falling one, after it.
    pub fn crossing(&self, k: i64, m: f64) -> f64 {
        let th = self.half_period();
        let m = m.clamp(-1.0, 1.0);
        let start = k as f64 * th;
        if k.rem_euclid(2) == 0 {
            start + th * (m + 1.0) / 2.0
        } else {
            start + th * (1.0 - m) / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Pwm(Pwm),
    Inverter(InverterControl),
}

impl Controller {
    pub fn frequency(&self) -> f64 {
        match self {
            Controller::Pwm(p) => p.frequency,
            Controller::Inverter(c) => c.carrier_hz,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Controller::Pwm(_) => 2,
            Controller::Inverter(_) => 4,
        }
    }
}

/// Circuit description consumed by the transient solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Netlist {
    /// `node_names[k]` names node `k`; index 0 is ground.
    pub node_names: Vec<String>,
    pub elements: Vec<Element>,
    pub controllers: Vec<Controller>,
    pub case_id: Option<u8>,
    pub alpha_imp: f64,
}

impl Netlist {
    pub fn new() -> Self {
        Self {
            node_names: vec![String::from("gnd")],
            elements: Vec::new(),
            controllers: Vec::new(),
            case_id: None,
            alpha_imp: 1.0,
        }
    }

    /// Returns the id of `name`, creating the node if needed.
    pub fn node(&mut self, name: &str) -> NodeId {
        if let Some(k) = self.node_names.iter().position(|n| n == name) {
            return k;
        }
        self.node_names.push(String::from(name));
        self.node_names.len() - 1
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn add(&mut self, name: &str, kind: ElementKind, terminals: &[NodeId]) -> usize {
        self.elements.push(Element {
            name: String::from(name),
            kind,
            terminals: terminals.to_vec(),
        });
        self.elements.len() - 1
    }

    pub fn add_controller(&mut self, c: Controller) -> usize {
        self.controllers.push(c);
        self.controllers.len() - 1
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    pub fn resistor(&mut self, name: &str, a: NodeId, b: NodeId, ohms: f64) -> usize {
        self.add(name, ElementKind::Resistor { ohms }, &[a, b])
    }

    pub fn inductor(&mut self, name: &str, a: NodeId, b: NodeId, henries: f64) -> usize {
        self.add(
            name,
            ElementKind::Inductor {
                henries,
                initial_current: 0.0,
            },
            &[a, b],
        )
    }

    pub fn capacitor(&mut self, name: &str, a: NodeId, b: NodeId, farads: f64, v0: f64) -> usize {
        self.add(
            name,
            ElementKind::Capacitor {
                farads,
                initial_voltage: v0,
            },
            &[a, b],
        )
    }

    pub fn diode(&mut self, name: &str, anode: NodeId, cathode: NodeId) -> usize {
        self.add(
            name,
            ElementKind::Diode {
                g_on: super::G_ON,
                g_off: super::G_OFF,
            },
            &[anode, cathode],
        )
    }

    pub fn switch(&mut self, name: &str, a: NodeId, b: NodeId, gate: Gate) -> usize {
        self.add(
            name,
            ElementKind::Switch {
                gate,
                g_on: super::G_ON,
                g_off: super::G_OFF,
            },
            &[a, b],
        )
    }

    pub fn source(&mut self, name: &str, pos: NodeId, neg: NodeId, w: SourceWaveform) -> usize {
        self.add(name, ElementKind::VoltageSource(w), &[pos, neg])
    }

    /// Zero-volt source measuring the current from `from` to `to`.
    pub fn ammeter(&mut self, name: &str, from: NodeId, to: NodeId) -> usize {
        self.source(name, from, to, SourceWaveform::Dc(0.0))
    }

    /// Highest controller frequency, zero when there are no controllers.
    pub fn max_controller_frequency(&self) -> f64 {
        self.controllers
            .iter()
            .map(Controller::frequency)
            .fold(0.0, f64::max)
    }

    /// Checks element parameters, terminal arity and ids, gate references,
    /// and that every node reaches ground through some element.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_names.len();
        if n == 0 {
            return Err(Error::invalid("netlist has no ground node"));
        }
        for e in &self.elements {
            if e.terminals.len() != e.kind.arity() {
                return Err(Error::invalid(alloc::format!(
                    "element `{}` needs {} terminals, has {}",
                    e.name,
                    e.kind.arity(),
                    e.terminals.len()
                )));
            }
            if let Some(t) = e.terminals.iter().find(|&&t| t >= n) {
                return Err(Error::invalid(alloc::format!(
                    "element `{}` references unknown node {t}",
                    e.name
                )));
            }
            e.kind.check().map_err(|m| {
                Error::invalid(alloc::format!("element `{}`: {m}", e.name))
            })?;
            if let ElementKind::Switch { gate, .. } = e.kind {
                let ok = self
                    .controllers
                    .get(gate.controller)
                    .is_some_and(|c| gate.channel < c.channels());
                if !ok {
                    return Err(Error::invalid(alloc::format!(
                        "switch `{}` references missing controller output {}:{}",
                        e.name,
                        gate.controller,
                        gate.channel
                    )));
                }
            }
        }
        for c in &self.controllers {
            match c {
                Controller::Pwm(p) => {
                    if !(p.frequency > 0.0 && (0.0..=1.0).contains(&p.duty)) {
                        return Err(Error::invalid("PWM needs positive frequency and duty in [0, 1]"));
                    }
                }
                Controller::Inverter(ic) => {
                    let sense_ok = self
                        .elements
                        .get(ic.sense_element)
                        .is_some_and(|e| matches!(e.kind, ElementKind::Inductor { .. }));
                    if !sense_ok || ic.sense_nodes.0 >= n || ic.sense_nodes.1 >= n {
                        return Err(Error::invalid("inverter controller sense references are invalid"));
                    }
                    if !(ic.carrier_hz > 0.0 && ic.dc_voltage > 0.0 && ic.fundamental_hz > 0.0) {
                        return Err(Error::invalid("inverter carrier, fundamental and DC voltage must be positive"));
                    }
                    if !(ic.dead_time >= 0.0 && ic.dead_time < 0.5 * ic.half_period()) {
                        return Err(Error::invalid("inverter dead time must be shorter than a quarter carrier period"));
                    }
                    let ratio = 2.0 * ic.carrier_hz / ic.fundamental_hz;
                    if (ratio - math::round(ratio)).abs() > 1e-9 {
                        return Err(Error::invalid("inverter carrier must be a half-integer multiple of the fundamental"));
                    }
                }
            }
        }
        self.check_connectivity()
    }

    fn check_connectivity(&self) -> Result<()> {
        let n = self.node_names.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut join = |a: usize, b: usize| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        };
        for e in &self.elements {
            match e.kind {
                // A current sink provides no conductive path.
                ElementKind::ConstantPowerSink { .. } => {}
                ElementKind::IdealTransformer { .. } => {
                    join(e.terminals[0], e.terminals[1]);
                    join(e.terminals[2], e.terminals[3]);
                }
                _ => join(e.terminals[0], e.terminals[1]),
            }
        }
        let root = find(&mut parent, GROUND);
        for k in 1..n {
            if find(&mut parent, k) != root {
                return Err(Error::FloatingNode(self.node_names[k].clone()));
            }
        }
        Ok(())
    }
}
