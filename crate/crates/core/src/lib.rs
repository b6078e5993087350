//! Harmonic load modeling for power-electronics-dominated residences.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the pipeline:
//!
//! * [`signal`]: periodic waveforms, RMS phasor spectra, THD and per-harmonic power.
//! * [`harmonics`]: exact-bin DFT and ESPRIT phasor extraction.
//! * [`circuits`]: a fixed-step trapezoidal MNA transient solver and the
//!   household netlists (split-phase service, desktop SMPS, laptop flyback,
//!   VFD front end, PV inverter).
//! * [`datagen`]: load-combination cases and impedance-gain sweeps.
//! * [`fcm`]: least-squares identification of frequency coupling matrices.
//!
//! File formats, the CLI and parallel sweeps live in the `harmload` crate.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod circuits;
pub mod datagen;
mod error;
pub mod fcm;
pub mod harmonics;
pub(crate) mod linalg;
pub(crate) mod math;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;
