use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Rng;
use crate::error::{dim_err, Error, Result};

/// `[batch, heads, tokens, dim]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape4 {
    pub batch: usize,
    pub heads: usize,
    pub tokens: usize,
    pub dim: usize,
}

impl Shape4 {
    pub const fn new(batch: usize, heads: usize, tokens: usize, dim: usize) -> Self {
        Self {
            batch,
            heads,
            tokens,
            dim,
        }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.heads * self.tokens * self.dim
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `(batch, head)` slice.
    pub const fn head_len(&self) -> usize {
        self.tokens * self.dim
    }
}

impl core::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}]",
            self.batch, self.heads, self.tokens, self.dim
        )
    }
}

/// Dense rank-4 `f32` tensor, row-major in `(batch, head, token, dim)` order.
///
/// Constructors reject non-finite data, so a `Tensor4` built through the
/// public API only ever holds finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor4")]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

#[derive(Deserialize)]
struct RawTensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

impl TryFrom<RawTensor4> for Tensor4 {
    type Error = Error;

    fn try_from(raw: RawTensor4) -> Result<Self> {
        Tensor4::from_vec(raw.shape, raw.data)
    }
}

impl Tensor4 {
    pub fn zeros(shape: Shape4) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(dim_err!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Tensor4::from_vec"));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for h in 0..shape.heads {
                for i in 0..shape.tokens {
                    for c in 0..shape.dim {
                        data.push(f(b, h, i, c));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn random_normal(shape: Shape4, rng: &mut Rng, std: f64) -> Self {
        let mut t = Self::zeros(shape);
        rng.fill_normal(&mut t.data, std);
        t
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, b: usize, h: usize, i: usize, c: usize) -> usize {
        let s = self.shape;
        debug_assert!(b < s.batch && h < s.heads && i < s.tokens && c < s.dim);
        ((b * s.heads + h) * s.tokens + i) * s.dim + c
    }

    #[inline]
    pub fn get(&self, b: usize, h: usize, i: usize, c: usize) -> f32 {
        self.data[self.offset(b, h, i, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, h: usize, i: usize, c: usize, value: f32) {
        let o = self.offset(b, h, i, c);
        self.data[o] = value;
    }

    /// The `[tokens, dim]` slice of one `(batch, head)` pair.
    pub fn head(&self, b: usize, h: usize) -> &[f32] {
        let len = self.shape.head_len();
        let start = (b * self.shape.heads + h) * len;
        &self.data[start..start + len]
    }

    pub fn head_mut(&mut self, b: usize, h: usize) -> &mut [f32] {
        let len = self.shape.head_len();
        let start = (b * self.shape.heads + h) * len;
        &mut self.data[start..start + len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(dim_err!(
                "{what}: shapes {} and {} differ",
                self.shape,
                other.shape
            ));
        }
        Ok(())
    }
}

/// Row-major `f32` matrix. Holds latents `[tokens, width]` and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn random_normal(rows: usize, cols: usize, rng: &mut Rng, std: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        rng.fill_normal(&mut m.data, std);
        m
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// `self · rhs`, accumulated in `f64`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(dim_err!(
                "matmul {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows,
                rhs.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let mut acc = vec![0f64; rhs.cols];
        for r in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let a = a as f64;
                for (dst, &w) in acc.iter_mut().zip(rhs.row(k)) {
                    *dst += a * w as f64;
                }
            }
            for (dst, &a) in out.row_mut(r).iter_mut().zip(&acc) {
                *dst = a as f32;
            }
        }
        Ok(out)
    }

    /// Elementwise `self += rhs`.
    pub fn add_assign(&mut self, rhs: &Matrix) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(dim_err!(
                "add {}x{} and {}x{}",
                self.rows,
                self.cols,
                rhs.rows,
                rhs.cols
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
