//! Dense tensor substrate: shapes, scaled `QKᵀ`, masked row softmax, MSE, RNG.
//!
//! Values are `f32`; every dot product and reduction accumulates in `f64`.
//! Full `[N, N]` score tensors are only produced here and in the dense
//! oracle path of [`crate::attention`].

mod rng;
mod tensor;

pub use rng::Rng;
pub use tensor::{Matrix, Shape4, Tensor4};

use alloc::vec;

use crate::error::{dim_err, Error, Result};
use crate::patterns::BlockMask;

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// `scale · Q Kᵀ` per `(batch, head)`, returned as a `[B, H, N, N]` tensor.
pub fn matmul_qk(q: &Tensor4, k: &Tensor4, scale: f32) -> Result<Tensor4> {
    q.same_shape(k, "matmul_qk")?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParam(alloc::format!(
            "score scale must be positive, got {scale}"
        )));
    }
    let s = q.shape();
    let (n, d) = (s.tokens, s.dim);
    let mut out = Tensor4::zeros(Shape4::new(s.batch, s.heads, n, n));
    for b in 0..s.batch {
        for h in 0..s.heads {
            let qh = q.head(b, h);
            let kh = k.head(b, h);
            let oh = out.head_mut(b, h);
            for i in 0..n {
                let qi = &qh[i * d..(i + 1) * d];
                for j in 0..n {
                    oh[i * n + j] = (scale as f64 * dot(qi, &kh[j * d..(j + 1) * d])) as f32;
                }
            }
        }
    }
    out.ensure_finite("matmul_qk")
}

/// Numerically stable softmax over the last axis of a `[B, H, N, N]` score
/// tensor. With a mask, inactive entries come out as exactly `0` and the
/// remaining entries are renormalized.
pub fn softmax_rows(scores: &Tensor4, mask: Option<&BlockMask>) -> Result<Tensor4> {
    let s = scores.shape();
    let n = s.dim;
    if s.tokens != n {
        return Err(dim_err!("softmax_rows expects square rows, got {s}"));
    }
    if let Some(m) = mask {
        if m.tokens() != n {
            return Err(dim_err!(
                "mask covers {} tokens, scores have {n}",
                m.tokens()
            ));
        }
    }
    let mut out = Tensor4::zeros(s);
    let mut active = vec![true; n];
    let mut exps = vec![0f64; n];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let src = scores.head(b, h);
            let dst = out.head_mut(b, h);
            for i in 0..n {
                if let Some(m) = mask {
                    for (j, a) in active.iter_mut().enumerate() {
                        *a = m.token_active(i, j);
                    }
                }
                let row = &src[i * n..(i + 1) * n];
                let max = row
                    .iter()
                    .zip(&active)
                    .filter(|(_, &a)| a)
                    .map(|(&x, _)| x as f64)
                    .fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return Err(Error::DegenerateRow { row: i });
                }
                let mut sum = 0f64;
                for j in 0..n {
                    exps[j] = if active[j] {
                        libm::exp(row[j] as f64 - max)
                    } else {
                        0.0
                    };
                    sum += exps[j];
                }
                for j in 0..n {
                    dst[i * n + j] = (exps[j] / sum) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Mean of squared differences over every element.
pub fn mse(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    a.same_shape(b, "mse")?;
    mse_slices(a.data(), b.data())
}

/// [`mse`] on flat slices of equal length.
pub fn mse_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_err!("mse over {} and {} values", a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let e = x as f64 - y as f64;
            e * e
        })
        .sum();
    Ok(sum / a.len() as f64)
}
