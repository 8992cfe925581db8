//! The five attention modes and their block masks.
//!
//! | mode | name            | mask                                             |
//! |------|-----------------|--------------------------------------------------|
//! | 0    | full            | every block                                      |
//! | 1    | skip            | none; the head output is zero                    |
//! | 2    | diagonal        | `|i - j| <= halfwidth`                           |
//! | 3    | multi-diagonal  | within `halfwidth` of `i - j ≡ 0 (mod period)`   |
//! | 4    | vertical stripe | listed key-block columns plus the main diagonal  |
//!
//! In the three structured modes, rows and columns of text or mixed blocks
//! (see [`BlockKind`](crate::layout::BlockKind)) are always active.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BlockGrid, TokenLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Mode {
    Full = 0,
    Skip = 1,
    Diagonal = 2,
    MultiDiagonal = 3,
    VerticalStripe = 4,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Full,
        Mode::Skip,
        Mode::Diagonal,
        Mode::MultiDiagonal,
        Mode::VerticalStripe,
    ];
    /// Candidates that may replace full attention.
    pub const SPARSE: [Mode; 4] = [
        Mode::Skip,
        Mode::Diagonal,
        Mode::MultiDiagonal,
        Mode::VerticalStripe,
    ];

    pub const fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Result<Mode> {
        Mode::ALL
            .get(index as usize)
            .copied()
            .ok_or_else(|| Error::InvalidParam(alloc::format!("mode index {index} not in 0..=4")))
    }

    pub const fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Skip => "skip",
            Mode::Diagonal => "diagonal",
            Mode::MultiDiagonal => "multi_diagonal",
            Mode::VerticalStripe => "vertical_stripe",
        }
    }
}

/// A mode together with its shape parameters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSpec {
    Full,
    Skip,
    Diagonal {
        band_halfwidth: usize,
    },
    MultiDiagonal {
        /// `None` derives the period from the frame length.
        period: Option<usize>,
        band_halfwidth: usize,
    },
    VerticalStripe {
        stripe_count: usize,
        /// Explicit key-block columns; `None` takes the first `stripe_count`
        /// unforced columns.
        stripes: Option<Vec<usize>>,
    },
}

impl PatternSpec {
    pub fn mode(&self) -> Mode {
        match self {
            PatternSpec::Full => Mode::Full,
            PatternSpec::Skip => Mode::Skip,
            PatternSpec::Diagonal { .. } => Mode::Diagonal,
            PatternSpec::MultiDiagonal { .. } => Mode::MultiDiagonal,
            PatternSpec::VerticalStripe { .. } => Mode::VerticalStripe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PatternSpec::MultiDiagonal {
                period: Some(0), ..
            } => Err(Error::InvalidParam("period_blocks must be >= 1".into())),
            PatternSpec::VerticalStripe { stripe_count: 0, .. } => {
                Err(Error::InvalidParam("stripe_block_count must be >= 1".into()))
            }
            PatternSpec::VerticalStripe {
                stripes: Some(list),
                ..
            } if list.is_empty() => Err(Error::InvalidParam("empty stripe list".into())),
            _ => Ok(()),
        }
    }
}

/// Repository defaults for the structured modes. These are configuration,
/// chosen for desk-scale grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternParams {
    pub block_size: usize,
    pub diagonal_halfwidth: usize,
    pub multi_period: usize,
    pub multi_halfwidth: usize,
    pub stripe_count: usize,
}

impl PatternParams {
    pub fn for_layout(layout: &TokenLayout) -> Self {
        Self {
            block_size: layout.block_size,
            diagonal_halfwidth: 1,
            multi_period: default_period(layout),
            multi_halfwidth: 0,
            stripe_count: 2,
        }
    }

    /// Spec for `mode`; `stripes` is used for vertical-stripe heads.
    pub fn spec(&self, mode: Mode, stripes: Option<&[usize]>) -> PatternSpec {
        match mode {
            Mode::Full => PatternSpec::Full,
            Mode::Skip => PatternSpec::Skip,
            Mode::Diagonal => PatternSpec::Diagonal {
                band_halfwidth: self.diagonal_halfwidth,
            },
            Mode::MultiDiagonal => PatternSpec::MultiDiagonal {
                period: Some(self.multi_period),
                band_halfwidth: self.multi_halfwidth,
            },
            Mode::VerticalStripe => PatternSpec::VerticalStripe {
                stripe_count: stripes.map_or(self.stripe_count, <[usize]>::len),
                stripes: stripes.map(<[usize]>::to_vec),
            },
        }
    }
}

/// Frame length in blocks, rounded to nearest and at least 1.
pub fn default_period(layout: &TokenLayout) -> usize {
    let bs = layout.block_size.max(1);
    ((layout.tokens_per_frame + bs / 2) / bs).max(1)
}

/// First `count` unforced key-block columns, padded with forced ones if the
/// grid has too few.
pub fn default_stripes(grid: &BlockGrid, count: usize) -> Vec<usize> {
    let unforced = (0..grid.len()).filter(|&b| !grid.is_forced(b));
    let forced = (0..grid.len()).filter(|&b| grid.is_forced(b));
    unforced.chain(forced).take(count).collect()
}

/// Square boolean grid over blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMask {
    blocks: usize,
    block_size: usize,
    tokens: usize,
    active: Vec<bool>,
}

impl BlockMask {
    pub fn from_fn(grid: &BlockGrid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let blocks = grid.len();
        let mut active = vec![false; blocks * blocks];
        for r in 0..blocks {
            for c in 0..blocks {
                active[r * blocks + c] = f(r, c);
            }
        }
        Self {
            blocks,
            block_size: grid.block_size(),
            tokens: grid.tokens(),
            active,
        }
    }

    pub fn full(grid: &BlockGrid) -> Self {
        Self::from_fn(grid, |_, _| true)
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    #[inline]
    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.active[row * self.blocks + col]
    }

    #[inline]
    pub fn token_active(&self, row_token: usize, col_token: usize) -> bool {
        self.is_active(row_token / self.block_size, col_token / self.block_size)
    }

    /// Active flags of one block row.
    pub fn row(&self, row: usize) -> &[bool] {
        &self.active[row * self.blocks..(row + 1) * self.blocks]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// `1 - active / total`, always recomputed from the grid.
    pub fn sparsity(&self) -> f64 {
        let total = self.blocks * self.blocks;
        if total == 0 {
            return 0.0;
        }
        1.0 - self.active_count() as f64 / total as f64
    }

    /// First block row with no active block, if any.
    pub fn first_empty_row(&self) -> Option<usize> {
        (0..self.blocks).find(|&r| !self.row(r).iter().any(|&a| a))
    }

    pub fn is_superset_of(&self, other: &BlockMask) -> bool {
        self.blocks == other.blocks
            && self.active.iter().zip(&other.active).all(|(&a, &b)| a || !b)
    }
}

/// A lowered pattern: skip has no mask at all.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModeMask {
    Skip,
    Blocks(BlockMask),
}

impl ModeMask {
    pub fn sparsity(&self) -> f64 {
        match self {
            ModeMask::Skip => 1.0,
            ModeMask::Blocks(m) => m.sparsity(),
        }
    }

    pub fn blocks(&self) -> Option<&BlockMask> {
        match self {
            ModeMask::Skip => None,
            ModeMask::Blocks(m) => Some(m),
        }
    }
}

/// Knobs that are fixed in production but switched off by some tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskOptions {
    /// Keep rows and columns of text/mixed blocks active.
    pub force_boundary_blocks: bool,
    /// Union the main block diagonal into vertical-stripe masks.
    pub stripe_diagonal: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            force_boundary_blocks: true,
            stripe_diagonal: true,
        }
    }
}

pub fn build_mask(spec: &PatternSpec, grid: &BlockGrid) -> Result<ModeMask> {
    build_mask_with(spec, grid, MaskOptions::default())
}

pub fn build_mask_with(spec: &PatternSpec, grid: &BlockGrid, opts: MaskOptions) -> Result<ModeMask> {
    spec.validate()?;
    let forced: Vec<bool> = (0..grid.len())
        .map(|b| opts.force_boundary_blocks && grid.is_forced(b))
        .collect();
    let structured = |f: &dyn Fn(usize, usize) -> bool| {
        BlockMask::from_fn(grid, |r, c| forced[r] || forced[c] || f(r, c))
    };
    let mask = match spec {
        PatternSpec::Skip => return Ok(ModeMask::Skip),
        PatternSpec::Full => BlockMask::full(grid),
        &PatternSpec::Diagonal { band_halfwidth } => {
            structured(&|r, c| r.abs_diff(c) <= band_halfwidth)
        }
        &PatternSpec::MultiDiagonal {
            period,
            band_halfwidth,
        } => {
            let period = period.unwrap_or_else(|| default_period(grid.layout()));
            structured(&|r, c| {
                let off = (r as i64 - c as i64).rem_euclid(period as i64) as usize;
                off <= band_halfwidth || period - off <= band_halfwidth
            })
        }
        PatternSpec::VerticalStripe {
            stripe_count,
            stripes,
        } => {
            let cols: BTreeSet<usize> = match stripes {
                Some(list) => list.iter().copied().collect(),
                None => default_stripes(grid, *stripe_count).into_iter().collect(),
            };
            if let Some(&bad) = cols.iter().find(|&&c| c >= grid.len()) {
                return Err(Error::Bounds {
                    index: bad,
                    len: grid.len(),
                });
            }
            let diag = opts.stripe_diagonal;
            structured(&|r, c| cols.contains(&c) || (diag && r == c))
        }
    };
    if let Some(row) = mask.first_empty_row() {
        return Err(Error::DegenerateMask { row });
    }
    Ok(ModeMask::Blocks(mask))
}

/// Block sparsity of a spec on a grid. Full and skip are exact constants.
pub fn sparsity(spec: &PatternSpec, grid: &BlockGrid) -> Result<f64> {
    match spec {
        PatternSpec::Full => Ok(0.0),
        PatternSpec::Skip => Ok(1.0),
        _ => Ok(build_mask(spec, grid)?.sparsity()),
    }
}

/// Fraction of an `[N, N]` attention map's mass that lies in active blocks.
pub fn pattern_mass_coverage(map: &[f32], spec: &PatternSpec, grid: &BlockGrid) -> Result<f64> {
    match build_mask(spec, grid)? {
        ModeMask::Skip => {
            check_map(map, grid.tokens())?;
            Ok(0.0)
        }
        ModeMask::Blocks(mask) => mask_mass_coverage(map, &mask),
    }
}

/// [`pattern_mass_coverage`] for an already built mask.
pub fn mask_mass_coverage(map: &[f32], mask: &BlockMask) -> Result<f64> {
    let n = mask.tokens();
    check_map(map, n)?;
    let (mut inside, mut total) = (0f64, 0f64);
    for (i, row) in map.chunks_exact(n).enumerate() {
        for (j, &p) in row.iter().enumerate() {
            total += p as f64;
            if mask.token_active(i, j) {
                inside += p as f64;
            }
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

fn check_map(map: &[f32], n: usize) -> Result<()> {
    if map.len() != n * n {
        return Err(crate::error::dim_err!(
            "attention map has {} entries, expected {n}x{n}",
            map.len()
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Single-frame video layout of `blocks` blocks of 4 tokens: no forced blocks.
    fn grid(blocks: usize) -> BlockGrid {
        TokenLayout::new(0, 1, blocks * 4).with_block_size(4).block_grid()
    }

    /// Independent enumeration: count (r, c) pairs in the band / on the diagonals.
    fn count_pairs(n: usize, pred: impl Fn(i64, i64) -> bool) -> usize {
        let mut count = 0;
        for r in 0..n as i64 {
            for c in 0..n as i64 {
                if pred(r, c) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn diagonal_halfwidth_zero() {
        let m = build_mask(&PatternSpec::Diagonal { band_halfwidth: 0 }, &grid(8)).unwrap();
        let m = m.blocks().unwrap();
        assert_eq!(m.active_count(), 8);
        assert_eq!(m.sparsity(), 0.875);
    }

    #[test]
    fn diagonal_halfwidth_one() {
        let spec = PatternSpec::Diagonal { band_halfwidth: 1 };
        let expected = count_pairs(8, |r, c| (r - c).abs() <= 1);
        assert_eq!(expected, 22);
        assert_eq!(sparsity(&spec, &grid(8)).unwrap(), 1.0 - 22.0 / 64.0);
        assert_eq!(sparsity(&spec, &grid(8)).unwrap(), 0.65625);
    }

    #[test]
    fn multi_diagonal_period_four() {
        let spec = PatternSpec::MultiDiagonal {
            period: Some(4),
            band_halfwidth: 0,
        };
        let expected = count_pairs(12, |r, c| (r - c).rem_euclid(4) == 0);
        assert_eq!(expected, 36);
        let m = build_mask(&spec, &grid(12)).unwrap();
        assert_eq!(m.blocks().unwrap().active_count(), 36);
        assert_eq!(m.sparsity(), 0.75);
    }

    #[test]
    fn multi_diagonal_default_period_follows_frames() {
        // 3 frames of 8 tokens, block 4: period 2 blocks.
        let layout = TokenLayout::new(0, 3, 8).with_block_size(4);
        assert_eq!(default_period(&layout), 2);
        let spec = PatternSpec::MultiDiagonal {
            period: None,
            band_halfwidth: 0,
        };
        let m = build_mask(&spec, &layout.block_grid()).unwrap();
        let expected = count_pairs(6, |r, c| (r - c).rem_euclid(2) == 0);
        assert_eq!(m.blocks().unwrap().active_count(), expected);
        // Rounding: 10 tokens per frame with block 4 rounds to 3; tiny frames clamp to 1.
        assert_eq!(default_period(&TokenLayout::new(0, 2, 10).with_block_size(4)), 3);
        assert_eq!(default_period(&TokenLayout::new(0, 2, 1).with_block_size(4)), 1);
    }

    #[test]
    fn vertical_stripes_without_diagonal() {
        let spec = PatternSpec::VerticalStripe {
            stripe_count: 2,
            stripes: Some(vec![0, 5]),
        };
        let opts = MaskOptions {
            stripe_diagonal: false,
            ..MaskOptions::default()
        };
        let m = build_mask_with(&spec, &grid(10), opts).unwrap();
        assert_eq!(m.blocks().unwrap().active_count(), 20);
        assert!((m.sparsity() - 0.80).abs() < 1e-12);
        // With the default diagonal union: 20 + 10 - 2 overlaps.
        let m = build_mask(&spec, &grid(10)).unwrap();
        assert_eq!(m.blocks().unwrap().active_count(), 28);
    }

    #[test]
    fn stripe_out_of_range() {
        let spec = PatternSpec::VerticalStripe {
            stripe_count: 1,
            stripes: Some(vec![10]),
        };
        assert!(matches!(
            build_mask(&spec, &grid(10)),
            Err(Error::Bounds { index: 10, .. })
        ));
    }

    #[test]
    fn full_and_skip_constants() {
        let g = grid(5);
        assert_eq!(sparsity(&PatternSpec::Full, &g).unwrap(), 0.0);
        assert_eq!(sparsity(&PatternSpec::Skip, &g).unwrap(), 1.0);
        assert_eq!(build_mask(&PatternSpec::Skip, &g).unwrap(), ModeMask::Skip);
    }

    #[test]
    fn invalid_params() {
        let g = grid(4);
        let bad = [
            PatternSpec::MultiDiagonal {
                period: Some(0),
                band_halfwidth: 0,
            },
            PatternSpec::VerticalStripe {
                stripe_count: 0,
                stripes: None,
            },
            PatternSpec::VerticalStripe {
                stripe_count: 1,
                stripes: Some(vec![]),
            },
        ];
        for spec in bad {
            assert!(matches!(build_mask(&spec, &g), Err(Error::InvalidParam(_))));
        }
    }

    #[test]
    fn text_and_mixed_blocks_forced() {
        // 4 text tokens, 2 frames of 6, block 4: [T][f0][f0 f1 mixed][f1]
        let layout = TokenLayout::new(4, 2, 6).with_block_size(4);
        let g = layout.block_grid();
        let m = build_mask(&PatternSpec::Diagonal { band_halfwidth: 0 }, &g).unwrap();
        let m = m.blocks().unwrap();
        for b in 0..4 {
            assert!(m.is_active(0, b) && m.is_active(b, 0));
            assert!(m.is_active(2, b) && m.is_active(b, 2));
        }
        assert!(!m.is_active(1, 3) && !m.is_active(3, 1));
    }

    #[test]
    fn coverage_examples() {
        let g = grid(4); // 16 tokens
        let n = 16;
        let mut identity = vec![0f32; n * n];
        for i in 0..n {
            identity[i * n + i] = 1.0;
        }
        let diag = PatternSpec::Diagonal { band_halfwidth: 0 };
        assert_eq!(pattern_mass_coverage(&identity, &diag, &g).unwrap(), 1.0);

        let uniform = vec![1.0 / n as f32; n * n];
        for spec in [
            diag.clone(),
            PatternSpec::MultiDiagonal {
                period: Some(2),
                band_halfwidth: 0,
            },
            PatternSpec::VerticalStripe {
                stripe_count: 1,
                stripes: Some(vec![3]),
            },
        ] {
            let cov = pattern_mass_coverage(&uniform, &spec, &g).unwrap();
            let s = sparsity(&spec, &g).unwrap();
            assert!((cov - (1.0 - s)).abs() < 1e-6);
        }

        // Every query puts all its mass on key tokens of block 3 (tokens 12..16).
        let mut stripe = vec![0f32; n * n];
        for i in 0..n {
            for j in 12..16 {
                stripe[i * n + j] = 0.25;
            }
        }
        let spec = PatternSpec::VerticalStripe {
            stripe_count: 1,
            stripes: Some(vec![3]),
        };
        assert_eq!(pattern_mass_coverage(&stripe, &spec, &g).unwrap(), 1.0);
        assert_eq!(pattern_mass_coverage(&stripe, &PatternSpec::Skip, &g).unwrap(), 0.0);
        assert!(pattern_mass_coverage(&stripe[1..], &spec, &g).is_err());
    }

    #[test]
    fn mode_indices_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::from_index(m.index()).unwrap(), m);
        }
        assert!(Mode::from_index(5).is_err());
    }

    proptest! {
        #[test]
        fn band_masks_symmetric_and_monotone(
            blocks in 1usize..24, hw in 0usize..6, period in 1usize..8,
        ) {
            let opts = MaskOptions { force_boundary_blocks: false, ..MaskOptions::default() };
            let g = grid(blocks);
            let specs = |hw| [
                PatternSpec::Diagonal { band_halfwidth: hw },
                PatternSpec::MultiDiagonal { period: Some(period), band_halfwidth: hw },
            ];
            for (small, big) in specs(hw).iter().zip(specs(hw + 1).iter()) {
                let a = build_mask_with(small, &g, opts).unwrap();
                let b = build_mask_with(big, &g, opts).unwrap();
                let (a, b) = (a.blocks().unwrap(), b.blocks().unwrap());
                for r in 0..blocks {
                    for c in 0..blocks {
                        prop_assert_eq!(a.is_active(r, c), a.is_active(c, r));
                    }
                }
                prop_assert!(b.is_superset_of(a));
                let recount = 1.0 - a.active_count() as f64 / (blocks * blocks) as f64;
                prop_assert_eq!(sparsity(small, &g).unwrap(), recount);
            }
        }

        #[test]
        fn stripe_count_monotone(blocks in 2usize..20, k in 1usize..10) {
            let g = grid(blocks);
            let a = build_mask(&PatternSpec::VerticalStripe { stripe_count: k, stripes: None }, &g).unwrap();
            let b = build_mask(&PatternSpec::VerticalStripe { stripe_count: k + 1, stripes: None }, &g).unwrap();
            prop_assert!(b.blocks().unwrap().is_superset_of(a.blocks().unwrap()));
        }
    }
}
