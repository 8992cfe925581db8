//! Attention under every mode.
//!
//! [`dense_attention`] is the reference: it materializes the `[N, N]` score
//! and probability tensors. [`sparse_attention`] is the production path: it
//! walks query blocks, visits only the active key blocks of each block row, and
//! keeps a running max and denominator per query row (online softmax). Its
//! scratch is one key-block score row plus a `[block, d]` accumulator, so it
//! never allocates anything quadratic in `N`.
//!
//! Scores are always scaled by `1/sqrt(d)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::layout::BlockGrid;
use crate::numerics::{self, dot, Shape4, Tensor4};
use crate::patterns::{build_mask, BlockMask, ModeMask, PatternSpec};

#[inline]
fn score_scale(d: usize) -> f64 {
    1.0 / libm::sqrt(d as f64)
}

fn check_qkv(q: &Tensor4, k: &Tensor4, v: &Tensor4) -> Result<Shape4> {
    q.same_shape(k, "attention q/k")?;
    q.same_shape(v, "attention q/v")?;
    let s = q.shape();
    if s.dim == 0 {
        return Err(dim_err!("head dim must be >= 1"));
    }
    Ok(s)
}

fn check_mask(mask: &BlockMask, n: usize) -> Result<()> {
    if mask.tokens() != n {
        return Err(dim_err!(
            "mask covers {} tokens, inputs have {n}",
            mask.tokens()
        ));
    }
    if let Some(row) = mask.first_empty_row() {
        return Err(Error::DegenerateRow {
            row: row * mask.block_size(),
        });
    }
    Ok(())
}

/// Row-stochastic attention weights `softmax(QKᵀ/√d)` as `[B, H, N, N]`,
/// optionally restricted to a mask.
pub fn attention_probs(q: &Tensor4, k: &Tensor4, mask: Option<&BlockMask>) -> Result<Tensor4> {
    let d = q.shape().dim;
    let scores = numerics::matmul_qk(q, k, score_scale(d) as f32)?;
    numerics::softmax_rows(&scores, mask)
}

fn probs_times_v(probs: &Tensor4, v: &Tensor4) -> Result<Tensor4> {
    let s = v.shape();
    let (n, d) = (s.tokens, s.dim);
    let mut out = Tensor4::zeros(s);
    let mut acc = vec![0f64; d];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let p = probs.head(b, h);
            let vh = v.head(b, h);
            let oh = out.head_mut(b, h);
            for i in 0..n {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (j, &w) in p[i * n..(i + 1) * n].iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (a, &x) in acc.iter_mut().zip(&vh[j * d..(j + 1) * d]) {
                        *a += w as f64 * x as f64;
                    }
                }
                for (o, &a) in oh[i * d..(i + 1) * d].iter_mut().zip(&acc) {
                    *o = a as f32;
                }
            }
        }
    }
    Ok(out)
}

/// `softmax(QKᵀ/√d)·V` per head, fully materialized.
pub fn dense_attention(q: &Tensor4, k: &Tensor4, v: &Tensor4) -> Result<Tensor4> {
    check_qkv(q, k, v)?;
    let probs = attention_probs(q, k, None)?;
    probs_times_v(&probs, v)?.ensure_finite("dense_attention")
}

/// Dense attention with masked scores set to `-inf`. Oracle for the sparse kernel.
pub fn dense_masked_attention(
    q: &Tensor4,
    k: &Tensor4,
    v: &Tensor4,
    mask: &BlockMask,
) -> Result<Tensor4> {
    let s = check_qkv(q, k, v)?;
    check_mask(mask, s.tokens)?;
    let probs = attention_probs(q, k, Some(mask))?;
    probs_times_v(&probs, v)?.ensure_finite("dense_masked_attention")
}

/// Per-row online-softmax state for one query block.
struct Scratch {
    scores: Vec<f64>,
    acc: Vec<f64>,
    max: Vec<f64>,
    denom: Vec<f64>,
}

impl Scratch {
    fn new(block: usize, d: usize) -> Self {
        Self {
            scores: vec![0.0; block],
            acc: vec![0.0; block * d],
            max: vec![0.0; block],
            denom: vec![0.0; block],
        }
    }
}

/// One `(batch, head)` slice through the tiled kernel.
fn sparse_head(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    d: usize,
    mask: &BlockMask,
    scratch: &mut Scratch,
    out: &mut [f32],
) {
    let n = mask.tokens();
    let bs = mask.block_size();
    let scale = score_scale(d);
    for qb in 0..mask.blocks() {
        let row0 = qb * bs;
        let rows = bs.min(n - row0);
        scratch.max[..rows].fill(f64::NEG_INFINITY);
        scratch.denom[..rows].fill(0.0);
        scratch.acc[..rows * d].fill(0.0);
        for (kb, _) in mask.row(qb).iter().enumerate().filter(|(_, &a)| a) {
            let col0 = kb * bs;
            let cols = bs.min(n - col0);
            for r in 0..rows {
                let qi = &q[(row0 + r) * d..(row0 + r + 1) * d];
                let scores = &mut scratch.scores[..cols];
                let mut block_max = f64::NEG_INFINITY;
                for (c, s) in scores.iter_mut().enumerate() {
                    let j = col0 + c;
                    *s = scale * dot(qi, &k[j * d..(j + 1) * d]);
                    block_max = block_max.max(*s);
                }
                let old = scratch.max[r];
                let new = old.max(block_max);
                let acc = &mut scratch.acc[r * d..(r + 1) * d];
                if old != new {
                    let correction = libm::exp(old - new);
                    scratch.denom[r] *= correction;
                    acc.iter_mut().for_each(|a| *a *= correction);
                    scratch.max[r] = new;
                }
                for (c, &s) in scores.iter().enumerate() {
                    let p = libm::exp(s - new);
                    scratch.denom[r] += p;
                    let j = col0 + c;
                    for (a, &x) in acc.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                        *a += p * x as f64;
                    }
                }
            }
        }
        for r in 0..rows {
            let inv = 1.0 / scratch.denom[r];
            let dst = &mut out[(row0 + r) * d..(row0 + r + 1) * d];
            for (o, &a) in dst.iter_mut().zip(&scratch.acc[r * d..(r + 1) * d]) {
                *o = (a * inv) as f32;
            }
        }
    }
}

/// Block-sparse attention: equal to [`dense_masked_attention`] up to rounding,
/// computed without any `[N, N]` buffer.
pub fn sparse_attention(q: &Tensor4, k: &Tensor4, v: &Tensor4, mask: &BlockMask) -> Result<Tensor4> {
    let s = check_qkv(q, k, v)?;
    check_mask(mask, s.tokens)?;
    let mut out = Tensor4::zeros(s);
    let mut scratch = Scratch::new(mask.block_size().min(s.tokens), s.dim);
    for b in 0..s.batch {
        for h in 0..s.heads {
            sparse_head(
                q.head(b, h),
                k.head(b, h),
                v.head(b, h),
                s.dim,
                mask,
                &mut scratch,
                out.head_mut(b, h),
            );
        }
    }
    out.ensure_finite("sparse_attention")
}

/// Skipped heads contribute exactly zero; the residual path carries the signal.
pub fn skip_attention(_q: &Tensor4, _k: &Tensor4, v: &Tensor4) -> Tensor4 {
    Tensor4::zeros(v.shape())
}

/// Heads of one layer that share a mode (and, for stripes, a stripe list).
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGroup {
    pub layer: usize,
    pub spec: PatternSpec,
    heads: Vec<usize>,
    mask: ModeMask,
}

impl HeadGroup {
    pub fn new(layer: usize, spec: PatternSpec, mut heads: Vec<usize>, grid: &BlockGrid) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Config("empty head group".into()));
        }
        heads.sort_unstable();
        let mask = build_mask(&spec, grid)?;
        Ok(Self {
            layer,
            spec,
            heads,
            mask,
        })
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn mask(&self) -> &ModeMask {
        &self.mask
    }
}

/// Groups the heads of one layer by identical spec, in order of first appearance.
pub fn group_heads(layer: usize, specs: &[PatternSpec], grid: &BlockGrid) -> Result<Vec<HeadGroup>> {
    let mut order: Vec<(&PatternSpec, Vec<usize>)> = Vec::new();
    for (h, spec) in specs.iter().enumerate() {
        match order.iter_mut().find(|(s, _)| *s == spec) {
            Some((_, heads)) => heads.push(h),
            None => order.push((spec, vec![h])),
        }
    }
    order
        .into_iter()
        .map(|(spec, heads)| HeadGroup::new(layer, spec.clone(), heads, grid))
        .collect()
}

/// Head index -> group mask, validating that `groups` partition `0..heads`.
fn head_owners(groups: &[HeadGroup], heads: usize, tokens: usize) -> Result<Vec<&ModeMask>> {
    let mut owner: Vec<Option<&ModeMask>> = vec![None; heads];
    let layer = groups.first().map(|g| g.layer);
    for g in groups {
        if Some(g.layer) != layer {
            return Err(Error::Config("head groups span several layers".into()));
        }
        if let ModeMask::Blocks(m) = &g.mask {
            check_mask(m, tokens)?;
        }
        for &h in &g.heads {
            let slot = owner.get_mut(h).ok_or(Error::Config(alloc::format!(
                "head {h} out of range for {heads} heads"
            )))?;
            if slot.replace(&g.mask).is_some() {
                return Err(Error::Config(alloc::format!("head {h} in two groups")));
            }
        }
    }
    owner
        .into_iter()
        .enumerate()
        .map(|(h, m)| m.ok_or(Error::Config(alloc::format!("head {h} has no group"))))
        .collect()
}

/// Runs every group of a layer. Each group shares one prebuilt mask across its
/// member heads; skip groups write zeros.
///
/// With the `parallel` feature the `(batch, head)` slices run on the rayon
/// pool. Every slice is computed independently in a fixed order, so results
/// do not depend on scheduling.
pub fn fused_layer_attention(
    q: &Tensor4,
    k: &Tensor4,
    v: &Tensor4,
    groups: &[HeadGroup],
) -> Result<Tensor4> {
    let s = check_qkv(q, k, v)?;
    let owner = head_owners(groups, s.heads, s.tokens)?;
    let mut out = Tensor4::zeros(s);
    let d = s.dim;
    let run = |idx: usize, dst: &mut [f32], scratch: &mut Option<Scratch>| {
        let (b, h) = (idx / s.heads, idx % s.heads);
        if let ModeMask::Blocks(mask) = owner[h] {
            let scratch =
                scratch.get_or_insert_with(|| Scratch::new(mask.block_size().min(s.tokens), d));
            if scratch.scores.len() < mask.block_size().min(s.tokens) {
                *scratch = Scratch::new(mask.block_size().min(s.tokens), d);
            }
            sparse_head(q.head(b, h), k.head(b, h), v.head(b, h), d, mask, scratch, dst);
        }
    };
    let chunk = s.head_len().max(1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.data_mut()
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each_init(|| None, |scratch, (idx, dst)| run(idx, dst, scratch));
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = None;
        for (idx, dst) in out.data_mut().chunks_mut(chunk).enumerate() {
            run(idx, dst, &mut scratch);
        }
    }
    out.ensure_finite("fused_layer_attention")
}
