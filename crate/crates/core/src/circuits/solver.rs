use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::netlist::{Controller, ElementKind, InverterControl, Netlist, NodeId};
use crate::math::{self, SQRT_2, TAU};
use crate::signal::{Channel, SampledWaveform, Unit};
use crate::{Error, Result};

/// Re-solves allowed per step when diode states flip.
pub const MAX_RESOLVES: usize = 4;
const MAX_CACHED_FACTORS: usize = 4096;
/// Reverse current a conducting diode may carry before it turns off. Keeps
/// round-off from toggling a diode whose current has settled at zero.
pub const REVERSE_CURRENT_TOLERANCE: f64 = 1e-6;

/// What a recorded channel measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// `v(pos) - v(neg)`.
    Voltage { pos: NodeId, neg: NodeId },
    /// Branch current of an element, flowing from its first terminal to its
    /// second through the element.
    Current { element: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub name: String,
    pub probe: Probe,
}

impl ChannelSpec {
    pub fn voltage(name: &str, pos: NodeId, neg: NodeId) -> Self {
        Self {
            name: String::from(name),
            probe: Probe::Voltage { pos, neg },
        }
    }

    pub fn current(name: &str, element: usize) -> Self {
        Self {
            name: String::from(name),
            probe: Probe::Current { element },
        }
    }

    pub fn unit(&self) -> Unit {
        match self.probe {
            Probe::Voltage { .. } => Unit::Volt,
            Probe::Current { .. } => Unit::Ampere,
        }
    }
}

/// Settling test applied once per window of fundamental cycles.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SteadyStateCriterion {
    pub window_cycles: usize,
    /// Largest tolerated relative RMS change between consecutive windows.
    pub rel_tol: f64,
    /// Consecutive windows that must pass.
    pub passes: usize,
}

impl Default for SteadyStateCriterion {
    fn default() -> Self {
        Self {
            window_cycles: 1,
            rel_tol: 2e-4,
            passes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub fundamental_hz: f64,
    /// Steps per fundamental cycle; the step is `1 / (f0 * steps_per_cycle)`.
    pub steps_per_cycle: usize,
    pub max_sim_time: f64,
    pub record: Vec<ChannelSpec>,
    pub steady_state: SteadyStateCriterion,
    /// Steady cycles returned by [`simulate`].
    pub record_cycles: usize,
    /// RMS values below this magnitude count as zero in the settling test.
    pub rms_floor: f64,
}

impl SimulationConfig {
    pub fn new(record: Vec<ChannelSpec>) -> Self {
        Self {
            fundamental_hz: 60.0,
            steps_per_cycle: 16_800,
            max_sim_time: 4.0,
            record,
            steady_state: SteadyStateCriterion::default(),
            record_cycles: 3,
            rms_floor: 1e-3,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.fundamental_hz * self.steps_per_cycle as f64)
    }

    pub fn max_cycles(&self) -> usize {
        math::floor(self.max_sim_time * self.fundamental_hz + 1e-9) as usize
    }

    pub fn validate(&self, netlist: &Netlist) -> Result<()> {
        if !(self.fundamental_hz > 0.0 && self.steps_per_cycle > 0) {
            return Err(Error::invalid("fundamental and steps per cycle must be positive"));
        }
        let fmax = netlist.max_controller_frequency();
        if fmax > 0.0 && self.dt() > 1.0 / (50.0 * fmax) * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "time step {} s is too coarse for a {fmax} Hz controller",
                self.dt()
            )));
        }
        if self.max_cycles() < 10 {
            return Err(Error::invalid("max_sim_time must cover at least 10 fundamental cycles"));
        }
        let ss = &self.steady_state;
        if ss.window_cycles == 0 || ss.passes == 0 || !(ss.rel_tol > 0.0) || self.record_cycles == 0 {
            return Err(Error::invalid("steady-state window, passes, tolerance and record cycles must be positive"));
        }
        for ch in &self.record {
            let ok = match ch.probe {
                Probe::Voltage { pos, neg } => pos < netlist.node_count() && neg < netlist.node_count(),
                Probe::Current { element } => element < netlist.elements.len(),
            };
            if !ok {
                return Err(Error::invalid(format!("channel `{}` probes an unknown node or element", ch.name)));
            }
        }
        Ok(())
    }
}

/// Gate fractions within this distance of 0 or 1 are treated as exact.
const FRACTION_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerState {
    Pwm,
    Inverter {
        /// Most recent modulation commands keyed by carrier half period.
        commands: [(i64, f64); 3],
        /// Half-period averages of the sensed voltage times `(sin, cos)` of
        /// the fundamental over the last cycle, used as a ring buffer.
        window: Vec<(f64, f64)>,
        /// Trapezoidal integral of the sensed voltage over the running half
        /// carrier period.
        integral: f64,
    },
}

/// Solver state at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitState {
    pub time: f64,
    pub step: u64,
    /// Node voltages (nodes 1..) followed by branch currents.
    pub solution: Vec<f64>,
    /// Per element: terminal voltage at `time` (reactive elements).
    pub element_voltage: Vec<f64>,
    /// Per element: current at `time` (reactive elements and sinks).
    pub element_current: Vec<f64>,
    /// Per element: fraction of the last step a diode or switch conducted.
    /// Diodes are always 0 or 1; a switch is fractional only in a step
    /// containing a gate edge.
    pub conduction: Vec<f64>,
    /// Per element: filtered terminal voltage of constant-power sinks.
    pub sink_voltage: Vec<f64>,
    pub controllers: Vec<ControllerState>,
}

/// Netlist compiled for repeated time stepping at a fixed step.
pub struct Simulator<'a> {
    netlist: &'a Netlist,
    dt: f64,
    nodes: usize,
    size: usize,
    branch: Vec<usize>,
    companion: Vec<f64>,
    base: DMatrix<f64>,
    toggles: Vec<usize>,
    /// Complementary switch pairs `(upper, lower)` forming a half bridge.
    legs: Vec<(usize, usize)>,
    cache: BTreeMap<Vec<u64>, LU<f64, Dyn, Dyn>>,
    rhs: DVector<f64>,
    work: DVector<f64>,
    gates: Vec<[f64; 4]>,
}

const NO_BRANCH: usize = usize::MAX;
const START_STEP_FRACTION: f64 = 1e-3;

fn row(node: NodeId) -> Option<usize> {
    node.checked_sub(1)
}

fn stamp_conductance(m: &mut DMatrix<f64>, a: NodeId, b: NodeId, g: f64) {
    if let Some(i) = row(a) {
        m[(i, i)] += g;
    }
    if let Some(j) = row(b) {
        m[(j, j)] += g;
    }
    if let (Some(i), Some(j)) = (row(a), row(b)) {
        m[(i, j)] -= g;
        m[(j, i)] -= g;
    }
}

fn inject(rhs: &mut DVector<f64>, a: NodeId, b: NodeId, current: f64) {
    // `current` flows from a to b through the element.
    if let Some(i) = row(a) {
        rhs[i] -= current;
    }
    if let Some(j) = row(b) {
        rhs[j] += current;
    }
}

fn snap(f: f64) -> f64 {
    if f < FRACTION_SNAP {
        0.0
    } else if f > 1.0 - FRACTION_SNAP {
        1.0
    } else {
        f
    }
}

fn conductance(kind: &ElementKind, fraction: f64) -> f64 {
    match *kind {
        ElementKind::Diode { g_on, g_off } | ElementKind::Switch { g_on, g_off, .. } => {
            g_off + fraction * (g_on - g_off)
        }
        _ => 0.0,
    }
}

impl<'a> Simulator<'a> {
    pub fn new(netlist: &'a Netlist, dt: f64) -> Result<Self> {
        netlist.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("time step must be positive"));
        }
        let nodes = netlist.node_count() - 1;
        let mut size = nodes;
        let mut branch = vec![NO_BRANCH; netlist.elements.len()];
        for (k, e) in netlist.elements.iter().enumerate() {
            if matches!(e.kind, ElementKind::VoltageSource(_) | ElementKind::IdealTransformer { .. }) {
                branch[k] = size;
                size += 1;
            }
        }
        let mut base = DMatrix::zeros(size, size);
        let mut companion = vec![0.0; netlist.elements.len()];
        let mut toggles = Vec::new();
        for (k, e) in netlist.elements.iter().enumerate() {
            let t = &e.terminals;
            match e.kind {
                ElementKind::Resistor { ohms } => stamp_conductance(&mut base, t[0], t[1], 1.0 / ohms),
                ElementKind::Inductor { henries, .. } => {
                    companion[k] = dt / (2.0 * henries);
                    stamp_conductance(&mut base, t[0], t[1], companion[k]);
                }
                ElementKind::Capacitor { farads, .. } => {
                    companion[k] = 2.0 * farads / dt;
                    stamp_conductance(&mut base, t[0], t[1], companion[k]);
                }
                ElementKind::VoltageSource(_) => {
                    let r = branch[k];
                    if let Some(i) = row(t[0]) {
                        base[(i, r)] += 1.0;
                        base[(r, i)] += 1.0;
                    }
                    if let Some(j) = row(t[1]) {
                        base[(j, r)] -= 1.0;
                        base[(r, j)] -= 1.0;
                    }
                }
                ElementKind::IdealTransformer { ratio } => {
                    let r = branch[k];
                    let coeffs = [1.0, -1.0, -ratio, ratio];
                    for (&node, &c) in t.iter().zip(&coeffs) {
                        if let Some(i) = row(node) {
                            base[(i, r)] += c;
                            base[(r, i)] += c;
                        }
                    }
                }
                ElementKind::Diode { .. } | ElementKind::Switch { .. } => toggles.push(k),
                ElementKind::ConstantPowerSink { .. } => {}
            }
        }
        Ok(Self {
            netlist,
            dt,
            nodes,
            size,
            branch,
            companion,
            base,
            legs: half_bridges(netlist),
            toggles,
            cache: BTreeMap::new(),
            rhs: DVector::zeros(size),
            work: DVector::zeros(size),
            gates: vec![[0.0; 4]; netlist.controllers.len()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn netlist(&self) -> &Netlist {
        self.netlist
    }

    /// State at t = 0 from the elements' initial conditions.
    pub fn initial_state(&self) -> CircuitState {
        let n = self.netlist.elements.len();
        let mut s = CircuitState {
            time: 0.0,
            step: 0,
            solution: vec![0.0; self.size],
            element_voltage: vec![0.0; n],
            element_current: vec![0.0; n],
            conduction: vec![0.0; n],
            sink_voltage: vec![0.0; n],
            controllers: self
                .netlist
                .controllers
                .iter()
                .map(|c| match c {
                    Controller::Pwm(_) => ControllerState::Pwm,
                    Controller::Inverter(ic) => {
                        let n = ic.samples_per_cycle();
                        let w = TAU / n as f64;
                        let amp = SQRT_2 * ic.grid_rms;
                        ControllerState::Inverter {
                            commands: [(i64::MIN, 0.0); 3],
                            window: (0..n)
                                .map(|k| {
                                    let (s, c) = (math::sin(w * k as f64), math::cos(w * k as f64));
                                    (amp * s * s, amp * s * c)
                                })
                                .collect(),
                            integral: 0.0,
                        }
                    }
                })
                .collect(),
        };
        for (k, e) in self.netlist.elements.iter().enumerate() {
            match e.kind {
                ElementKind::Inductor { initial_current, .. } => s.element_current[k] = initial_current,
                ElementKind::Capacitor { initial_voltage, .. } => {
                    s.element_voltage[k] = initial_voltage;
                    if let Some(i) = row(e.terminals[0]) {
                        s.solution[i] += initial_voltage;
                    }
                }
                ElementKind::ConstantPowerSink { nominal_voltage, .. } => {
                    s.sink_voltage[k] = nominal_voltage
                }
                _ => {}
            }
        }
        self.consistent_history(&mut s);
        s
    }

    /// Replaces the inductor voltages and capacitor currents at `t = 0` with
    /// the values reached after a step much shorter than `dt`, so the first
    /// trapezoidal step starts from derivatives that match the circuit.
    fn consistent_history(&self, s: &mut CircuitState) {
        let Ok(mut short) = Simulator::new(self.netlist, self.dt * START_STEP_FRACTION) else {
            return;
        };
        let mut probe = s.clone();
        if short.advance(&mut probe).is_err() {
            return;
        }
        for (k, e) in self.netlist.elements.iter().enumerate() {
            match e.kind {
                ElementKind::Inductor { .. } => s.element_voltage[k] = probe.element_voltage[k],
                ElementKind::Capacitor { .. } => s.element_current[k] = probe.element_current[k],
                _ => {}
            }
        }
    }

    fn node_voltage(solution: &[f64], node: NodeId) -> f64 {
        row(node).map_or(0.0, |i| solution[i])
    }

    fn across(&self, solution: &[f64], k: usize) -> f64 {
        let t = &self.netlist.elements[k].terminals;
        Self::node_voltage(solution, t[0]) - Self::node_voltage(solution, t[1])
    }

    /// Current through element `k` in `state`, first terminal to second.
    pub fn element_current(&self, state: &CircuitState, k: usize) -> f64 {
        let e = &self.netlist.elements[k];
        match e.kind {
            ElementKind::Resistor { ohms } => self.across(&state.solution, k) / ohms,
            ElementKind::Inductor { .. }
            | ElementKind::Capacitor { .. }
            | ElementKind::ConstantPowerSink { .. } => state.element_current[k],
            ElementKind::VoltageSource(_) | ElementKind::IdealTransformer { .. } => {
                state.solution[self.branch[k]]
            }
            ElementKind::Diode { .. } | ElementKind::Switch { .. } => {
                conductance(&e.kind, state.conduction[k]) * self.across(&state.solution, k)
            }
        }
    }

    pub fn probe(&self, state: &CircuitState, probe: &Probe) -> f64 {
        match *probe {
            Probe::Voltage { pos, neg } => {
                Self::node_voltage(&state.solution, pos) - Self::node_voltage(&state.solution, neg)
            }
            Probe::Current { element } => self.element_current(state, element),
        }
    }

    /// Fills `self.gates` with each controller channel's on-fraction over
    /// `[t0, t1]`, sampling new inverter commands from `state` as needed.
    fn update_controllers(&mut self, state: &mut CircuitState, t0: f64, t1: f64) {
        for (c, (ctrl, cs)) in self
            .netlist
            .controllers
            .iter()
            .zip(state.controllers.iter_mut())
            .enumerate()
        {
            match (ctrl, cs) {
                (Controller::Pwm(p), _) => {
                    let on = snap(p.on_fraction(t0, t1));
                    self.gates[c] = [on, 1.0 - on, 0.0, 0.0];
                }
                (
                    Controller::Inverter(ic),
                    ControllerState::Inverter {
                        commands,
                        window,
                        integral,
                    },
                ) => {
                    let v = |n: NodeId| row(n).map_or(0.0, |i| state.solution[i]);
                    let sensed_v = v(ic.sense_nodes.0) - v(ic.sense_nodes.1);
                    let sensed_i = state.element_current[ic.sense_element];
                    let latest = ic.half_period_index(t1 - 0.5 * self.dt);
                    let newest = commands.iter().map(|c| c.0).max().unwrap_or(i64::MIN);
                    let first = newest.saturating_add(1).max(latest - 2);
                    if first > latest {
                        *integral += sensed_v * self.dt;
                    } else {
                        *integral += 0.5 * sensed_v * self.dt;
                        if latest > 0 {
                            let n = window.len();
                            let phase = TAU * ic.fundamental_hz * (t0 - 0.5 * ic.half_period());
                            let avg = *integral / ic.half_period();
                            window[(latest - 1).rem_euclid(n as i64) as usize] =
                                (avg * math::sin(phase), avg * math::cos(phase));
                        }
                        *integral = 0.5 * sensed_v * self.dt;
                        for k in first..=latest {
                            let m = inverter_command(ic, window, sensed_i, t0);
                            let oldest = (0..commands.len()).min_by_key(|&j| commands[j].0).unwrap_or(0);
                            commands[oldest] = (k, m);
                        }
                    }
                    let lookup = |k: i64| commands.iter().find(|c| c.0 == k).map_or(0.0, |c| c.1);
                    let (a_hi, a_lo) = leg_on_fractions(ic, &lookup, 1.0, t0, t1);
                    let (b_hi, b_lo) = leg_on_fractions(ic, &lookup, -1.0, t0, t1);
                    self.gates[c] = [snap(a_hi), snap(a_lo), snap(b_hi), snap(b_lo)];
                }
                _ => unreachable!("controller state mismatch"),
            }
        }
    }

    fn assemble(&self, conduction: &[f64]) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for &k in &self.toggles {
            let e = &self.netlist.elements[k];
            stamp_conductance(&mut m, e.terminals[0], e.terminals[1], conductance(&e.kind, conduction[k]));
        }
        // A leg switching within the step is stamped as two partial
        // conductances in series across the rails; cancel the rail-to-rail
        // current this would draw so the leg acts as its time average.
        for &(hi, lo) in &self.legs {
            let (a, b) = (&self.netlist.elements[hi], &self.netlist.elements[lo]);
            if [conduction[hi], conduction[lo]].iter().all(|&f| f > 0.0 && f < 1.0) {
                let g1 = conductance(&a.kind, conduction[hi]);
                let g2 = conductance(&b.kind, conduction[lo]);
                stamp_conductance(&mut m, a.terminals[0], b.terminals[1], -g1 * g2 / (g1 + g2));
            }
        }
        m
    }

    fn check_factor(&self, lu: &LU<f64, Dyn, Dyn>) -> Result<()> {
        let u = lu.u();
        match (0..self.size).find(|&i| u[(i, i)] == 0.0 || !u[(i, i)].is_finite()) {
            Some(i) => Err(Error::SingularMatrix(self.unknown_name(i))),
            None => Ok(()),
        }
    }

    /// Solves the step system for the given conduction pattern into `work`.
    fn solve(&mut self, conduction: &[f64]) -> Result<()> {
        let binary = self.toggles.iter().all(|&k| conduction[k] == 0.0 || conduction[k] == 1.0);
        self.work.copy_from(&self.rhs);
        let solved = if binary {
            let mut key = vec![0u64; self.toggles.len().div_ceil(64)];
            for (j, &k) in self.toggles.iter().enumerate() {
                if conduction[k] == 1.0 {
                    key[j / 64] |= 1 << (j % 64);
                }
            }
            if !self.cache.contains_key(&key) {
                if self.cache.len() >= MAX_CACHED_FACTORS {
                    self.cache.clear();
                }
                let lu = self.assemble(conduction).lu();
                self.check_factor(&lu)?;
                self.cache.insert(key.clone(), lu);
            }
            self.cache[&key].solve_mut(&mut self.work)
        } else {
            let lu = self.assemble(conduction).lu();
            self.check_factor(&lu)?;
            lu.solve_mut(&mut self.work)
        };
        if solved {
            Ok(())
        } else {
            Err(Error::SingularMatrix(String::from("step system")))
        }
    }

    fn unknown_name(&self, i: usize) -> String {
        if i < self.nodes {
            return self.netlist.node_names[i + 1].clone();
        }
        let k = self.branch.iter().position(|&b| b == i).unwrap_or(0);
        format!("current of `{}`", self.netlist.elements[k].name)
    }

    /// Advances `state` by one step.
    pub fn advance(&mut self, state: &mut CircuitState) -> Result<()> {
        let step = state.step + 1;
        let t0 = state.step as f64 * self.dt;
        let t = step as f64 * self.dt;
        self.update_controllers(state, t0, t);

        let mut conduction = state.conduction.clone();
        for &k in &self.toggles {
            if let ElementKind::Switch { gate, .. } = self.netlist.elements[k].kind {
                conduction[k] = self.gates[gate.controller][gate.channel];
            }
        }

        self.rhs.fill(0.0);
        for (k, e) in self.netlist.elements.iter().enumerate() {
            let term = &e.terminals;
            match e.kind {
                ElementKind::Inductor { .. } => {
                    let hist = state.element_current[k] + self.companion[k] * state.element_voltage[k];
                    inject(&mut self.rhs, term[0], term[1], hist);
                }
                ElementKind::Capacitor { .. } => {
                    let hist = -(self.companion[k] * state.element_voltage[k] + state.element_current[k]);
                    inject(&mut self.rhs, term[0], term[1], hist);
                }
                ElementKind::VoltageSource(ref w) => self.rhs[self.branch[k]] = w.value(t),
                ElementKind::ConstantPowerSink {
                    watts,
                    nominal_voltage,
                    clamp_fraction,
                    ..
                } => {
                    let v = state.sink_voltage[k];
                    let clamp = clamp_fraction * nominal_voltage;
                    let i = if v.abs() >= clamp {
                        watts / v
                    } else {
                        watts * v / (clamp * clamp)
                    };
                    state.element_current[k] = i;
                    inject(&mut self.rhs, term[0], term[1], i);
                }
                _ => {}
            }
        }

        let mut resolves = 0;
        loop {
            self.solve(&conduction)?;
            let mut flipped = Vec::new();
            for &k in &self.toggles {
                if let ElementKind::Diode { g_on, .. } = self.netlist.elements[k].kind {
                    let v = self.across(self.work.as_slice(), k);
                    let on = conduction[k] == 1.0;
                    let want = if on {
                        g_on * v >= -REVERSE_CURRENT_TOLERANCE
                    } else {
                        v > 0.0
                    };
                    if want != on {
                        flipped.push(k);
                    }
                }
            }
            if flipped.is_empty() {
                break;
            }
            if resolves == MAX_RESOLVES {
                return Err(Error::SwitchOscillation {
                    time: t,
                    iterations: resolves,
                    switches: flipped
                        .iter()
                        .map(|&k| self.netlist.elements[k].name.clone())
                        .collect(),
                });
            }
            for k in flipped {
                conduction[k] = 1.0 - conduction[k];
            }
            resolves += 1;
        }

        state.solution.copy_from_slice(self.work.as_slice());
        state.conduction = conduction;
        for (k, e) in self.netlist.elements.iter().enumerate() {
            match e.kind {
                ElementKind::Inductor { .. } => {
                    let v = self.across(&state.solution, k);
                    let hist = state.element_current[k] + self.companion[k] * state.element_voltage[k];
                    state.element_current[k] = self.companion[k] * v + hist;
                    state.element_voltage[k] = v;
                }
                ElementKind::Capacitor { .. } => {
                    let v = self.across(&state.solution, k);
                    let hist = -(self.companion[k] * state.element_voltage[k] + state.element_current[k]);
                    state.element_current[k] = self.companion[k] * v + hist;
                    state.element_voltage[k] = v;
                }
                ElementKind::ConstantPowerSink { time_constant, .. } => {
                    let v = self.across(&state.solution, k);
                    let a = 1.0 - math::exp(-self.dt / time_constant);
                    state.sink_voltage[k] += a * (v - state.sink_voltage[k]);
                }
                _ => {}
            }
        }
        state.time = t;
        state.step = step;
        Ok(())
    }
}

/// Switch pairs driven by channels `2j` and `2j + 1` of one controller where
/// the upper switch's second terminal is the lower switch's first.
fn half_bridges(netlist: &Netlist) -> Vec<(usize, usize)> {
    let gate = |k: usize| match netlist.elements[k].kind {
        ElementKind::Switch { gate, .. } => Some(gate),
        _ => None,
    };
    let mut legs = Vec::new();
    for hi in 0..netlist.elements.len() {
        let Some(g) = gate(hi) else { continue };
        if g.channel % 2 != 0 {
            continue;
        }
        let lo = (0..netlist.elements.len()).find(|&lo| {
            gate(lo).is_some_and(|h| h.controller == g.controller && h.channel == g.channel + 1)
                && netlist.elements[lo].terminals[0] == netlist.elements[hi].terminals[1]
        });
        if let Some(lo) = lo {
            legs.push((hi, lo));
        }
    }
    legs
}

/// On-fractions of a leg's (upper, lower) devices over `[t0, t1]`.
///
/// `sign` selects leg A (`1.0`) or leg B (`-1.0`), which is modulated with the
/// negated command. Each device turns on `dead_time` after the leg's wanted
/// state changes in its favour and turns off immediately.
fn leg_on_fractions(
    ic: &InverterControl,
    command: &dyn Fn(i64) -> f64,
    sign: f64,
    t0: f64,
    t1: f64,
) -> (f64, f64) {
    let from = t0 - ic.dead_time;
    let th = ic.half_period();
    // Segments of the wanted upper state covering [from, t1].
    let mut segments = [(0.0, 0.0, false); 8];
    let mut count = 0;
    let mut push = |s: f64, e: f64, v: bool| {
        let (s, e) = (s.max(from), e.min(t1));
        if e <= s {
            return;
        }
        if count > 0 && segments[count - 1].2 == v {
            segments[count - 1].1 = e;
        } else {
            segments[count] = (s, e, v);
            count += 1;
        }
    };
    for k in ic.half_period_index(from)..=ic.half_period_index(t1) {
        let start = k as f64 * th;
        let x = ic.crossing(k, sign * command(k));
        let rising = k.rem_euclid(2) == 0;
        push(start, x, rising);
        push(x, start + th, !rising);
    }
    let span = t1 - t0;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for &(s, e, v) in &segments[..count] {
        let on = (e.min(t1) - (s + ic.dead_time).max(t0)).max(0.0);
        if v {
            upper += on;
        } else {
            lower += on;
        }
    }
    (upper / span, lower / span)
}

fn inverter_command(ic: &InverterControl, window: &[(f64, f64)], sensed_i: f64, t: f64) -> f64 {
    let n = window.len();
    let (a, b) = window
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, c)| (a + s, b + c));
    let (a, b) = (2.0 * a / n as f64, 2.0 * b / n as f64);
    // Aim at the middle of the coming half carrier period.
    let ahead = t + 0.5 * ic.half_period();
    let w = TAU * ic.fundamental_hz;
    let v_fund = a * math::sin(w * ahead) + b * math::cos(w * ahead);
    let (i_ref, di_ref) = ic.reference(ahead);
    let cmd = v_fund + ic.filter_inductance * di_ref + ic.kp * (i_ref - sensed_i);
    (cmd / ic.dc_voltage).clamp(-1.0, 1.0)
}

/// Advances `state` by one step of `dt` ending at `t + dt`.
///
/// Convenience wrapper that compiles the netlist on every call; loops should
/// hold a [`Simulator`] instead.
pub fn step(state: &CircuitState, netlist: &Netlist, t: f64, dt: f64) -> Result<CircuitState> {
    let mut sim = Simulator::new(netlist, dt)?;
    let mut next = state.clone();
    next.step = math::round(t / dt) as u64;
    sim.advance(&mut next)?;
    Ok(next)
}

/// Runs from t = 0 until the recorded channels settle, then records
/// `config.record_cycles` further cycles.
pub fn simulate(netlist: &Netlist, config: &SimulationConfig) -> Result<SampledWaveform> {
    config.validate(netlist)?;
    let mut sim = Simulator::new(netlist, config.dt())?;
    let mut state = sim.initial_state();
    let per_cycle = config.steps_per_cycle;
    let window = config.steady_state.window_cycles;
    let channels = config.record.len();

    let mut sums = vec![0.0; channels];
    let mut previous: Option<Vec<f64>> = None;
    let mut passes = 0;
    let mut trace = Vec::new();
    let max_cycles = config.max_cycles();
    let mut cycle = 0;
    let mut settled = false;
    while cycle < max_cycles {
        for _ in 0..per_cycle {
            sim.advance(&mut state)?;
            for (s, ch) in sums.iter_mut().zip(&config.record) {
                let x = sim.probe(&state, &ch.probe);
                *s += x * x;
            }
        }
        cycle += 1;
        if cycle % window != 0 {
            continue;
        }
        let n = (window * per_cycle) as f64;
        let rms: Vec<f64> = sums.iter().map(|s| math::sqrt(s / n)).collect();
        sums.iter_mut().for_each(|s| *s = 0.0);
        if let Some(prev) = &previous {
            let change = rms
                .iter()
                .zip(prev)
                .map(|(&a, &b)| (a - b).abs() / a.max(b).max(config.rms_floor))
                .fold(0.0, f64::max);
            trace.push(change);
            if change < config.steady_state.rel_tol {
                passes += 1;
            } else {
                passes = 0;
            }
        }
        previous = Some(rms);
        if passes >= config.steady_state.passes {
            settled = true;
            break;
        }
    }
    if !settled {
        let keep = trace.len().saturating_sub(10);
        return Err(Error::NoSteadyState {
            cycles: cycle,
            trace: trace.split_off(keep),
        });
    }

    let total = config.record_cycles * per_cycle;
    let mut data: Vec<Vec<f64>> = (0..channels).map(|_| Vec::with_capacity(total)).collect();
    let start_time = state.time;
    for _ in 0..total {
        for (d, ch) in data.iter_mut().zip(&config.record) {
            d.push(sim.probe(&state, &ch.probe));
        }
        sim.advance(&mut state)?;
    }

    let mut out = SampledWaveform::new(1.0 / config.dt(), config.fundamental_hz);
    out.start_time = start_time;
    out.steady_state = true;
    out.channels = config
        .record
        .iter()
        .zip(data)
        .map(|(ch, samples)| Channel {
            name: ch.name.clone(),
            unit: ch.unit(),
            samples,
        })
        .collect();
    out.meta.insert(String::from("settle_cycles"), format!("{cycle}"));
    if let Some(case) = netlist.case_id {
        out.meta.insert(String::from("case"), format!("{case}"));
    }
    out.meta.insert(String::from("alpha_imp"), format!("{}", netlist.alpha_imp));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::netlist::{Gate, Pwm, SourceWaveform, GROUND};

    fn run(n: &Netlist, dt: f64, steps: usize, mut f: impl FnMut(&Simulator, &CircuitState)) {
        let mut sim = Simulator::new(n, dt).unwrap();
        let mut s = sim.initial_state();
        for _ in 0..steps {
            sim.advance(&mut s).unwrap();
            f(&sim, &s);
        }
    }

    #[test]
    fn resistor_on_dc_source() {
        let mut n = Netlist::new();
        let a = n.node("a");
        n.source("V", a, GROUND, SourceWaveform::Dc(1.0));
        let r = n.resistor("R", a, GROUND, 1.0);
        run(&n, 1e-6, 10, |sim, s| {
            assert_eq!(sim.probe(s, &Probe::Voltage { pos: a, neg: GROUND }), 1.0);
            assert!((sim.element_current(s, r) - 1.0).abs() < 1e-12);
        });
    }

    #[test]
    fn rl_step_matches_closed_form() {
        let (r, l) = (1.0, 1e-3);
        let tau = l / r;
        let mut n = Netlist::new();
        let a = n.node("a");
        let b = n.node("b");
        n.source("V", a, GROUND, SourceWaveform::Dc(1.0));
        n.resistor("R", a, b, r);
        let ind = n.inductor("L", b, GROUND, l);
        let mut last = 0.0;
        let mut worst: f64 = 0.0;
        run(&n, tau / 100.0, 500, |sim, s| {
            last = s.time;
            let exact = 1.0 - libm::exp(-s.time / tau);
            worst = worst.max((sim.element_current(s, ind) - exact).abs());
        });
        assert!((last - 5.0 * tau).abs() < 1e-12);
        assert!(worst < 1e-4, "max error {worst}");
    }

    #[test]
    fn lc_tank_conserves_energy() {
        let (l, c) = (1e-3, 1e-3);
        let mut n = Netlist::new();
        let a = n.node("a");
        n.capacitor("C", a, GROUND, c, 1.0);
        let ind = n.inductor("L", a, GROUND, l);
        let period = TAU * libm::sqrt(l * c);
        let energy = |sim: &Simulator, s: &CircuitState| {
            let v = sim.probe(s, &Probe::Voltage { pos: a, neg: GROUND });
            let i = sim.element_current(s, ind);
            0.5 * c * v * v + 0.5 * l * i * i
        };
        let e0 = 0.5 * c;
        let mut worst: f64 = 0.0;
        run(&n, period / 100.0, 100_000, |sim, s| {
            worst = worst.max((energy(sim, s) - e0).abs() / e0);
        });
        assert!(worst < 1e-3, "drift {worst}");
    }

    #[test]
    fn pwm_switch_averages_exactly() {
        // A 1 kHz, 30 % half bridge feeding an RC low-pass: the capacitor
        // voltage settles to the duty-weighted source voltage regardless of
        // where the edges fall within steps.
        let mut n = Netlist::new();
        let (a, b, c) = (n.node("a"), n.node("b"), n.node("c"));
        let ctrl = n.add_controller(Controller::Pwm(Pwm {
            frequency: 1000.0,
            duty: 0.3,
            phase_offset: 1.234e-5,
        }));
        n.source("V", a, GROUND, SourceWaveform::Dc(10.0));
        n.switch("S", a, b, Gate { controller: ctrl, channel: 0 });
        n.switch("S2", b, GROUND, Gate { controller: ctrl, channel: 1 });
        n.resistor("R", b, c, 1e3);
        n.capacitor("C", c, GROUND, 1e-3, 3.0);
        let dt = 1.0 / 1000.0 / 77.0;
        let mut acc = 0.0;
        let steps = 77 * 1000;
        run(&n, dt, steps, |sim, s| {
            if s.step > steps as u64 / 2 {
                acc += sim.probe(s, &Probe::Voltage { pos: c, neg: GROUND });
            }
        });
        let mean = acc / (steps / 2) as f64;
        assert!((mean - 3.0).abs() < 3e-3, "{mean}");
    }

    #[test]
    fn diode_chain_that_cannot_settle_reports_switches() {
        // Each diode only becomes forward biased once its predecessor
        // conducts, so six diodes need more re-solves than allowed.
        let mut n = Netlist::new();
        let src = n.node("src");
        n.source("V", src, GROUND, SourceWaveform::Dc(10.0));
        let mut prev = src;
        for k in 0..6 {
            let node = n.node(&alloc::format!("n{k}"));
            let bias = n.node(&alloc::format!("b{k}"));
            n.source(&alloc::format!("Vb{k}"), bias, GROUND, SourceWaveform::Dc(-1.0 + 0.1 * k as f64));
            n.diode(&alloc::format!("D{k}"), prev, node);
            n.resistor(&alloc::format!("R{k}"), node, bias, 100.0);
            prev = node;
        }
        let mut sim = Simulator::new(&n, 1e-6).unwrap();
        let mut s = sim.initial_state();
        match sim.advance(&mut s) {
            Err(Error::SwitchOscillation { iterations, switches, .. }) => {
                assert_eq!(iterations, MAX_RESOLVES);
                assert_eq!(switches, ["D4"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn floating_node_is_named() {
        let mut n = Netlist::new();
        let (a, b) = (n.node("a"), n.node("island"));
        n.resistor("R", a, GROUND, 1.0);
        n.capacitor("C", b, b, 1e-6, 0.0);
        assert_eq!(
            Simulator::new(&n, 1e-6).err(),
            Some(Error::FloatingNode(String::from("island")))
        );
    }

    fn inverter(dead_time: f64) -> InverterControl {
        InverterControl {
            carrier_hz: 3600.0,
            fundamental_hz: 60.0,
            current_rms: 1.0,
            current_phase: 0.0,
            dc_voltage: 400.0,
            kp: 1.0,
            filter_inductance: 1e-3,
            dead_time,
            sense_element: 0,
            sense_nodes: (0, 0),
            grid_rms: 240.0,
        }
    }

    #[test]
    fn leg_duty_follows_modulation() {
        let ic = inverter(0.0);
        let th = ic.half_period();
        for &m in &[-0.8, -0.2, 0.0, 0.5, 0.95] {
            let cmd = |_| m;
            let (hi, lo) = leg_on_fractions(&ic, &cmd, 1.0, 0.0, 2.0 * th);
            assert!((hi - (1.0 + m) / 2.0).abs() < 1e-12);
            assert!((hi + lo - 1.0).abs() < 1e-12);
            let (hi_b, _) = leg_on_fractions(&ic, &cmd, -1.0, 0.0, 2.0 * th);
            assert!((hi_b - (1.0 - m) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_time_blanks_both_devices() {
        let td = 2e-6;
        let ic = inverter(td);
        let th = ic.half_period();
        let cmd = |_| 0.3;
        // One leg changes state twice per carrier period.
        let (hi, lo) = leg_on_fractions(&ic, &cmd, 1.0, 2.0 * th, 4.0 * th);
        assert!((1.0 - hi - lo - 2.0 * td / (2.0 * th)).abs() < 1e-9);
        // Fractions over consecutive sub-intervals add up.
        let t = [2.0 * th, 2.3 * th, 2.9 * th, 4.0 * th];
        let sum: f64 = t
            .windows(2)
            .map(|w| leg_on_fractions(&ic, &cmd, 1.0, w[0], w[1]).0 * (w[1] - w[0]))
            .sum();
        assert!((sum - hi * 2.0 * th).abs() < 1e-15);
    }
}
