//! Closed-form FLOP accounting.
//!
//! One multiply-add counts as two FLOPs. Softmax, normalization, RoPE and
//! activation costs are lower-order terms and are left out everywhere, so
//! every ratio computed here is self-consistent.
//!
//! Per layer and denoising step:
//!
//! ```text
//! attention    H·(1 - S)·4·N²·d      (2N²d for QKᵀ, 2N²d for P·V)
//! projections  8·N·D²                (Q, K, V, O)
//! FFN          4·N·D·F               (two dense layers)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::search::PatternConfig;

/// Attention FLOPs of one layer with `heads` heads at block sparsity `sparsity`.
pub fn attention_flops(tokens: usize, head_dim: usize, heads: usize, sparsity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidParam(alloc::format!(
            "sparsity {sparsity} not in [0, 1]"
        )));
    }
    let n = tokens as f64;
    Ok(heads as f64 * (1.0 - sparsity) * 4.0 * n * n * head_dim as f64)
}

/// Q, K, V and output projections of one layer.
pub fn projection_flops(tokens: usize, width: usize) -> f64 {
    let w = width as f64;
    8.0 * tokens as f64 * w * w
}

/// Both FFN matmuls of one layer.
pub fn ffn_flops(tokens: usize, width: usize, ffn_width: usize) -> f64 {
    4.0 * tokens as f64 * width as f64 * ffn_width as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub attention_flops_dense: f64,
    pub attention_flops_sparse: f64,
    /// Projections plus FFN; identical for dense and sparse runs.
    pub other_flops: f64,
    /// Total dense FLOPs over total sparse FLOPs.
    pub theoretical_speedup: f64,
    /// Dense attention FLOPs over total dense FLOPs.
    pub attention_latency_share: f64,
    /// Number of `(step, layer, head)` entries per mode, indexed by mode.
    pub mode_counts: [usize; 5],
    /// Sparse attention FLOPs spent in each mode, indexed by mode.
    pub attention_flops_by_mode: [f64; 5],
    /// Measured median seconds per denoising run, when timed.
    #[serde(default)]
    pub wall_clock: Option<f64>,
}

impl CostReport {
    pub fn total_dense(&self) -> f64 {
        self.attention_flops_dense + self.other_flops
    }

    pub fn total_sparse(&self) -> f64 {
        self.attention_flops_sparse + self.other_flops
    }
}

/// Whole-run cost of `config` on `spec`, summed over every step, layer and head.
pub fn config_cost(spec: &ModelSpec, config: &PatternConfig) -> Result<CostReport> {
    let (t, l, h) = config.dims();
    if (t, l, h) != (spec.timesteps, spec.layers, spec.heads) {
        return Err(Error::Config(alloc::format!(
            "config dims {:?} do not match model dims {:?}",
            (t, l, h),
            (spec.timesteps, spec.layers, spec.heads)
        )));
    }
    let grid = spec.layout.block_grid();
    let n = spec.tokens();
    let per_head_dense = attention_flops(n, spec.head_dim, 1, 0.0)?;
    let mut sparse = 0.0;
    let mut counts = [0usize; 5];
    let mut by_mode = [0f64; 5];
    for (&mode, s) in config.modes().iter().zip(config.entry_sparsities(&grid)?) {
        let flops = attention_flops(n, spec.head_dim, 1, s)?;
        sparse += flops;
        counts[mode as usize] += 1;
        by_mode[mode as usize] += flops;
    }
    let entries = (t * l * h) as f64;
    let dense = per_head_dense * entries;
    let layer_steps = (t * l) as f64;
    let other = layer_steps
        * (projection_flops(n, spec.width()) + ffn_flops(n, spec.width(), spec.ffn_width()));
    let total_dense = dense + other;
    let total_sparse = sparse + other;
    Ok(CostReport {
        attention_flops_dense: dense,
        attention_flops_sparse: sparse,
        other_flops: other,
        theoretical_speedup: if total_sparse > 0.0 { total_dense / total_sparse } else { 1.0 },
        attention_latency_share: if total_dense > 0.0 { dense / total_dense } else { 0.0 },
        mode_counts: counts,
        attention_flops_by_mode: by_mode,
        wall_clock: None,
    })
}

/// Attention share of a single dense layer; depends only on the architecture.
pub fn dense_attention_share(spec: &ModelSpec) -> f64 {
    let n = spec.tokens();
    let attn = attention_flops(n, spec.head_dim, spec.heads, 0.0).unwrap_or(0.0);
    let other = projection_flops(n, spec.width()) + ffn_flops(n, spec.width(), spec.ffn_width());
    attn / (attn + other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::TokenLayout;
    use crate::patterns::{Mode, PatternParams};
    use proptest::prelude::*;

    fn spec() -> ModelSpec {
        ModelSpec::new(2, 2, 8, TokenLayout::new(16, 4, 32).with_block_size(16), 2, 0)
    }

    #[test]
    fn attention_flops_examples() {
        assert_eq!(attention_flops(1024, 64, 1, 0.0).unwrap(), 268_435_456.0);
        assert_eq!(attention_flops(1024, 64, 1, 0.75).unwrap(), 67_108_864.0);
        assert_eq!(attention_flops(1024, 64, 1, 1.0).unwrap(), 0.0);
        assert!(attention_flops(1024, 64, 1, -0.1).is_err());
    }

    #[test]
    fn full_and_skip_configs() {
        let s = spec();
        let params = PatternParams::for_layout(&s.layout);
        let dims = (s.timesteps, s.layers, s.heads);
        let full = config_cost(&s, &PatternConfig::uniform(dims, Mode::Full, params).unwrap()).unwrap();
        assert_eq!(full.theoretical_speedup, 1.0);
        assert_eq!(full.attention_flops_sparse, full.attention_flops_dense);
        let skip = config_cost(&s, &PatternConfig::uniform(dims, Mode::Skip, params).unwrap()).unwrap();
        assert_eq!(skip.attention_flops_sparse, 0.0);
        assert_eq!(skip.theoretical_speedup, skip.total_dense() / skip.other_flops);
        assert_eq!(skip.mode_counts[Mode::Skip as usize], 8);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let s = spec();
        let c = PatternConfig::uniform((1, 1, 1), Mode::Full, PatternParams::for_layout(&s.layout)).unwrap();
        assert!(matches!(config_cost(&s, &c), Err(Error::Config(_))));
    }

    #[test]
    fn attention_share_grows_with_length() {
        let arch = |text, frames, tpf| {
            ModelSpec::new(1, 24, 128, TokenLayout::new(text, frames, tpf), 1, 0)
        };
        let small = dense_attention_share(&arch(226, 11, 4080));
        let large = dense_attention_share(&arch(256, 33, 3600));
        assert!(large > small);
    }

    proptest! {
        #[test]
        fn doubling_tokens_quadruples_attention(n in 1usize..5000, d in 1usize..256, s in 0f64..=1.0) {
            let a = attention_flops(n, d, 3, s).unwrap();
            let b = attention_flops(2 * n, d, 3, s).unwrap();
            prop_assert_eq!(b, 4.0 * a);
        }

        #[test]
        fn raising_sparsity_never_lowers_speedup(entry in 0usize..8, mode in 0u8..5) {
            let s = spec();
            let params = PatternParams::for_layout(&s.layout);
            let dims = (s.timesteps, s.layers, s.heads);
            let base = PatternConfig::uniform(dims, Mode::Diagonal, params).unwrap();
            let mut other = base.clone();
            let m = Mode::from_index(mode).unwrap();
            prop_assume!(m != Mode::VerticalStripe);
            let (t, rest) = (entry / 4, entry % 4);
            other.set_mode(t, rest / 2, rest % 2, m).unwrap();
            let grid = s.layout.block_grid();
            let sb = crate::patterns::sparsity(&params.spec(Mode::Diagonal, None), &grid).unwrap();
            let so = crate::patterns::sparsity(&params.spec(m, None), &grid).unwrap();
            let a = config_cost(&s, &base).unwrap().theoretical_speedup;
            let b = config_cost(&s, &other).unwrap().theoretical_speedup;
            if so >= sb { prop_assert!(b >= a); } else { prop_assert!(b <= a); }
        }
    }
}
