//! Files, command-line interface and parallel sweeps for `harmload-core`.
//!
//! * [`dataset`]: JSON Lines measurement datasets.
//! * [`model`]: fitted model and evaluation report files.
//! * [`waveform`]: raw waveforms, spectra and netlist dumps.
//! * [`plots`]: CSV tables for plotting.
//! * [`manifest`]: append-only run manifests with content digests.
//! * [`sweep`]: worker-pool sweeps.
//! * [`cli`]: the `harmload` command.

pub mod cli;
pub mod dataset;
mod error;
mod files;
pub mod manifest;
pub mod model;
pub mod plots;
pub mod sweep;
pub mod waveform;

pub use error::{FileError, FileResult};
pub use files::write_atomic;
