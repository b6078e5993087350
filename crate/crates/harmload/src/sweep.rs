//! Parallel impedance-gain sweeps over one or more cases.

use std::path::Path;

use harmload_core::datagen::{case_to_loads, measure, Dataset, MeasurementPoint, SweepConfig};
use rayon::prelude::*;

use crate::error::FileError;
use crate::waveform::save_waveform;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Core(#[from] harmload_core::Error),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// File stem of the raw waveform of one sweep point.
pub fn waveform_stem(case_id: u8, index: usize) -> String {
    format!("case{case_id:02}_point{index:02}")
}

fn job(
    case_id: u8,
    index: usize,
    alpha: f64,
    config: &SweepConfig,
    waveforms: Option<&Path>,
) -> Result<MeasurementPoint, SweepError> {
    let (mut point, wave) = measure(case_id, alpha, config)?;
    if let Some(dir) = waveforms {
        let (_, side) = save_waveform(&wave, &dir.join(waveform_stem(case_id, index)))?;
        point.provenance.waveform = side.file_name().map(|f| f.to_string_lossy().into_owned());
    }
    Ok(point)
}

/// Runs every (case, gain) point on a pool of `jobs` workers (0 picks the
/// number of logical cores). Results are ordered by (case, gain); the first
/// failure in that order is reported and no dataset is produced.
pub fn run_sweeps(
    cases: &[u8],
    config: &SweepConfig,
    jobs: usize,
    waveforms: Option<&Path>,
) -> Result<Dataset, SweepError> {
    config.validate()?;
    for &c in cases {
        case_to_loads(c)?;
    }
    let work: Vec<(u8, usize, f64)> = cases
        .iter()
        .flat_map(|&c| config.alpha_grid.iter().enumerate().map(move |(k, &a)| (c, k, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let results: Vec<Result<MeasurementPoint, SweepError>> = pool.install(|| {
        work.par_iter()
            .map(|&(c, k, a)| job(c, k, a, config, waveforms))
            .collect()
    });
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(config.clone(), points)?)
}
