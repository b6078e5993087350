//! Fixed-step transient simulation of switched circuits and the household
//! netlists built on it.
//!
//! The solver uses modified nodal analysis with trapezoidal companion models
//! for inductors and capacitors. Diodes and gated switches are two-state
//! conductances; diode states are re-evaluated after each solve.

mod house;
mod netlist;
mod solver;
mod supply;

pub use house::{
    build_house, build_house_with, meter_config, DesktopParams, HouseParams, InputFilter,
    LaptopParams, PvParams, SupplyParams, VfdParams, METER_CHANNELS,
};
pub use netlist::{
    Controller, Element, ElementKind, Gate, InverterControl, Netlist, NodeId, Pwm, SourceWaveform,
    GROUND,
};
pub use solver::{
    simulate, step, ChannelSpec, CircuitState, ControllerState, Probe, SimulationConfig,
    Simulator, SteadyStateCriterion, MAX_RESOLVES,
};
pub use supply::{equivalent_supply, DEGENERATE_VOLTAGE};

/// Conductance of a conducting diode or switch in siemens.
pub const G_ON: f64 = 1e3;
/// Conductance of a blocking diode or switch in siemens.
pub const G_OFF: f64 = 1e-9;
