//! Wall-clock timing of whole denoising runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use svdit_core::model::{denoise, Model};
use svdit_core::search::PatternConfig;

use crate::error::{CliError, Result};

pub const MIN_REPEATS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_seconds: f64,
    /// Timed runs in execution order; the warmup run is not included.
    pub samples: Vec<f64>,
}

/// Median of a nonempty sample; the mean of the two middle values for even
/// counts.
pub fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// One untimed warmup run of [`denoise`], then `repeats` timed runs.
pub fn measure_latency(model: &Model, config: &PatternConfig, repeats: usize, seed: u64) -> Result<LatencyStats> {
    if repeats < MIN_REPEATS {
        return Err(CliError::Usage(format!("--repeats must be at least {MIN_REPEATS}")));
    }
    denoise(model, config, seed)?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let traj = denoise(model, config, seed)?;
        samples.push(start.elapsed().as_secs_f64());
        std::hint::black_box(traj);
    }
    Ok(LatencyStats {
        median_seconds: median(&samples),
        samples,
    })
}
