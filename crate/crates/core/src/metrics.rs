//! Reconstruction quality of accelerated trajectories: MSE, PSNR and
//! single-scale SSIM.
//!
//! There is no pixel decoder, so SSIM runs on a latent "image": one row per
//! frame, one column per spatial token, each pixel the channel mean of that
//! video token's latent.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::TokenLayout;
use crate::model::Trajectory;
use crate::numerics::{mse_slices, Matrix};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 8;

/// `10·log10(max²/mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidParam("max_value must be > 0".into()));
    }
    if !(mse >= 0.0) {
        return Err(Error::InvalidParam("mse must be >= 0".into()));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * libm::log10(max_value * max_value / mse)).min(PSNR_CAP_DB))
}

pub fn psnr(a: &[f32], b: &[f32], max_value: f64) -> Result<f64> {
    psnr_from_mse(mse_slices(a, b)?, max_value)
}

/// Row-major 2D array of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::error::dim_err!(
                "plane {rows}x{cols} needs {} samples, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Channel-mean image of the video tokens of `x`: frames × tokens per frame.
    pub fn from_latent(x: &Matrix, layout: &TokenLayout) -> Result<Self> {
        if x.rows != layout.total_tokens() {
            return Err(crate::error::dim_err!(
                "latent has {} tokens, layout has {}",
                x.rows,
                layout.total_tokens()
            ));
        }
        let width = x.cols.max(1) as f64;
        let data = (layout.text_tokens..x.rows)
            .map(|t| (x.row(t).iter().map(|&v| v as f64).sum::<f64>() / width) as f32)
            .collect();
        Self::new(layout.frames, layout.tokens_per_frame, data)
    }
}

/// Mean SSIM over all 8×8 windows (stride 1) with `C1 = (0.01·R)²` and
/// `C2 = (0.03·R)²`, `R = data_range`. Statistics are unweighted population
/// moments.
pub fn ssim(a: &Plane, b: &Plane, data_range: f64) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(crate::error::dim_err!(
            "ssim planes {}x{} and {}x{} differ",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        ));
    }
    if a.rows < SSIM_WINDOW || a.cols < SSIM_WINDOW {
        return Err(crate::error::dim_err!(
            "plane {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.rows,
            a.cols
        ));
    }
    if !(data_range > 0.0) {
        return Err(Error::InvalidParam("data_range must be > 0".into()));
    }
    let c1 = (0.01 * data_range) * (0.01 * data_range);
    let c2 = (0.03 * data_range) * (0.03 * data_range);
    let count = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for r0 in 0..=a.rows - SSIM_WINDOW {
        for c0 in 0..=a.cols - SSIM_WINDOW {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                let base = r * a.cols + c0;
                for (&x, &y) in a.data[base..base + SSIM_WINDOW]
                    .iter()
                    .zip(&b.data[base..base + SSIM_WINDOW])
                {
                    let (x, y) = (x as f64, y as f64);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / count, sb / count);
            let va = (saa / count - ma * ma).max(0.0);
            let vb = (sbb / count - mb * mb).max(0.0);
            let cov = sab / count - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    Ok((total / windows as f64).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub frame: usize,
    pub mse: f64,
    pub psnr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr_db: f64,
    /// `None` when the latent image is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub per_frame: Vec<FrameQuality>,
}

/// Compares two latents of the same layout. `max_value` is both the PSNR peak
/// and the SSIM data range.
pub fn compare_latents(reference: &Matrix, candidate: &Matrix, layout: &TokenLayout, max_value: f64) -> Result<QualityReport> {
    if (reference.rows, reference.cols) != (candidate.rows, candidate.cols) {
        return Err(crate::error::dim_err!(
            "latents {}x{} and {}x{} differ",
            reference.rows,
            reference.cols,
            candidate.rows,
            candidate.cols
        ));
    }
    let mse = mse_slices(&reference.data, &candidate.data)?;
    let psnr_db = psnr_from_mse(mse, max_value)?;
    let pa = Plane::from_latent(reference, layout)?;
    let pb = Plane::from_latent(candidate, layout)?;
    let ssim = if pa.rows >= SSIM_WINDOW && pa.cols >= SSIM_WINDOW {
        Some(ssim(&pa, &pb, max_value)?)
    } else {
        None
    };
    let width = reference.cols;
    let per_frame = (0..layout.frames)
        .map(|f| {
            let start = (layout.text_tokens + f * layout.tokens_per_frame) * width;
            let end = start + layout.tokens_per_frame * width;
            let mse = mse_slices(&reference.data[start..end], &candidate.data[start..end])?;
            Ok(FrameQuality {
                frame: f,
                mse,
                psnr_db: psnr_from_mse(mse, max_value)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport {
        mse,
        psnr_db,
        ssim,
        per_frame,
    })
}

/// Quality of the candidate's final latent against the reference's.
pub fn compare_trajectories(reference: &Trajectory, candidate: &Trajectory, layout: &TokenLayout, max_value: f64) -> Result<QualityReport> {
    if reference.steps.len() != candidate.steps.len() {
        return Err(crate::error::dim_err!(
            "trajectories have {} and {} steps",
            reference.steps.len(),
            candidate.steps.len()
        ));
    }
    compare_latents(reference.final_latent(), candidate.final_latent(), layout, max_value)
}
