//! Text + video token sequence of an MM-DiT and the block grid over it.
//!
//! Tokens are laid out as `[text | frame 0 | frame 1 | ...]`. The attention map
//! splits into four regions by token type (text/video for query and key),
//! and sparse masks live on a coarse grid of `block_size`-token blocks.

use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 64;

fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    pub text_tokens: usize,
    pub frames: usize,
    pub tokens_per_frame: usize,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
}

impl TokenLayout {
    pub const fn new(text_tokens: usize, frames: usize, tokens_per_frame: usize) -> Self {
        Self {
            text_tokens,
            frames,
            tokens_per_frame,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub const fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidParam("block_size must be >= 1".into()));
        }
        if self.total_tokens() == 0 {
            return Err(Error::InvalidParam("layout has no tokens".into()));
        }
        if self.frames > 0 && self.tokens_per_frame == 0 {
            return Err(Error::InvalidParam("tokens_per_frame must be >= 1".into()));
        }
        Ok(())
    }

    pub const fn video_tokens(&self) -> usize {
        self.frames * self.tokens_per_frame
    }

    pub const fn total_tokens(&self) -> usize {
        self.text_tokens + self.video_tokens()
    }

    pub const fn grid_blocks(&self) -> usize {
        self.total_tokens().div_ceil(self.block_size)
    }

    pub const fn is_text(&self, token: usize) -> bool {
        token < self.text_tokens
    }

    /// Frame of a video token; `None` for text tokens and out-of-range indices.
    pub const fn frame_of(&self, token: usize) -> Option<usize> {
        if token < self.text_tokens || token >= self.total_tokens() {
            None
        } else {
            Some((token - self.text_tokens) / self.tokens_per_frame)
        }
    }

    pub fn classify_region(&self, row_token: usize, col_token: usize) -> Result<RegionKind> {
        let n = self.total_tokens();
        for index in [row_token, col_token] {
            if index >= n {
                return Err(Error::Bounds { index, len: n });
            }
        }
        Ok(match (self.is_text(row_token), self.is_text(col_token)) {
            (true, true) => RegionKind::TextText,
            (true, false) => RegionKind::TextVideo,
            (false, true) => RegionKind::VideoText,
            (false, false) => RegionKind::VideoVideo,
        })
    }

    /// The four regions in `[TT, TV, VT, VV]` order. Regions touching the text
    /// axis are empty when there are no text tokens.
    pub fn regions(&self) -> [Region; 4] {
        let text = 0..self.text_tokens;
        let video = self.text_tokens..self.total_tokens();
        [
            Region::new(RegionKind::TextText, text.clone(), text.clone()),
            Region::new(RegionKind::TextVideo, text.clone(), video.clone()),
            Region::new(RegionKind::VideoText, video.clone(), text),
            Region::new(RegionKind::VideoVideo, video.clone(), video),
        ]
    }

    pub fn block_grid(&self) -> BlockGrid {
        BlockGrid::new(*self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    TextText,
    TextVideo,
    VideoText,
    VideoVideo,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Region {
    fn new(kind: RegionKind, rows: Range<usize>, cols: Range<usize>) -> Self {
        Self { kind, rows, cols }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows.contains(&row) && self.cols.contains(&col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// Only text tokens.
    Text,
    /// Only tokens of one video frame.
    Video,
    /// Straddles the text/video boundary or a frame boundary.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub tokens: Range<usize>,
    pub kind: BlockKind,
    pub has_text: bool,
    /// Frame of the first video token in the block.
    pub frame: Option<usize>,
}

impl BlockInfo {
    /// Text and mixed blocks are kept fully active by every sparse mode.
    pub fn is_forced(&self) -> bool {
        self.kind != BlockKind::Video
    }
}

/// Block partition of a [`TokenLayout`]. The trailing block may be short.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    layout: TokenLayout,
    blocks: Vec<BlockInfo>,
}

impl BlockGrid {
    fn new(layout: TokenLayout) -> Self {
        let n = layout.total_tokens();
        let bs = layout.block_size.max(1);
        let blocks = (0..n.div_ceil(bs))
            .map(|b| {
                let tokens = b * bs..((b + 1) * bs).min(n);
                let has_text = tokens.start < layout.text_tokens;
                let first_video = tokens.start.max(layout.text_tokens);
                let frame = if first_video < tokens.end {
                    layout.frame_of(first_video)
                } else {
                    None
                };
                let last_frame = layout.frame_of(tokens.end - 1);
                let kind = match (has_text, frame) {
                    (true, None) => BlockKind::Text,
                    (true, Some(_)) => BlockKind::Mixed,
                    (false, f) if f == last_frame => BlockKind::Video,
                    (false, _) => BlockKind::Mixed,
                };
                BlockInfo {
                    tokens,
                    kind,
                    has_text,
                    frame,
                }
            })
            .collect();
        Self { layout, blocks }
    }

    pub fn layout(&self) -> &TokenLayout {
        &self.layout
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_size(&self) -> usize {
        self.layout.block_size
    }

    pub fn tokens(&self) -> usize {
        self.layout.total_tokens()
    }

    pub fn block_of(&self, token: usize) -> usize {
        token / self.layout.block_size
    }

    pub fn is_forced(&self, block: usize) -> bool {
        self.blocks[block].is_forced()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reported_sequence_lengths() {
        assert_eq!(TokenLayout::new(226, 11, 4080).total_tokens(), 45_106);
        assert_eq!(TokenLayout::new(256, 33, 3600).total_tokens(), 119_056);
        assert_eq!(TokenLayout::new(0, 21, 3600).total_tokens(), 75_600);
    }

    #[test]
    fn grid_with_short_tail() {
        let grid = TokenLayout::new(226, 11, 4080).block_grid();
        assert_eq!(grid.len(), 705);
        assert_eq!(grid.blocks()[704].tokens.len(), 50);

        let grid = TokenLayout::new(0, 1, 128).block_grid();
        assert_eq!(grid.len(), 2);
        assert!(grid.blocks().iter().all(|b| b.tokens.len() == 64));
        assert!(grid.blocks().iter().all(|b| b.kind == BlockKind::Video));
    }

    #[test]
    fn tiny_grid_enumerated_by_hand() {
        // tokens: t t | f0 f0 f0 | f1 f1 f1 ; blocks of 4: [t t f0 f0] [f0 f1 f1 f1]
        let grid = TokenLayout::new(2, 2, 3).with_block_size(4).block_grid();
        assert_eq!(grid.len(), 2);
        let b = grid.blocks();
        assert!(b[0].has_text && !b[1].has_text);
        assert_eq!(b[0].kind, BlockKind::Mixed);
        assert_eq!(b[1].kind, BlockKind::Mixed);
        assert_eq!(b[0].frame, Some(0));
        assert_eq!(b[1].frame, Some(0));
        assert_eq!(b[1].tokens, 4..8);
    }

    #[test]
    fn pure_text_block() {
        let grid = TokenLayout::new(8, 2, 4).with_block_size(4).block_grid();
        let kinds: Vec<_> = grid.blocks().iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            [BlockKind::Text, BlockKind::Text, BlockKind::Video, BlockKind::Video]
        );
        assert_eq!(grid.blocks()[3].frame, Some(1));
    }

    #[test]
    fn region_examples() {
        let l = TokenLayout::new(226, 11, 4080);
        assert_eq!(l.classify_region(0, 0).unwrap(), RegionKind::TextText);
        assert_eq!(l.classify_region(225, 226).unwrap(), RegionKind::TextVideo);
        assert_eq!(l.classify_region(226, 225).unwrap(), RegionKind::VideoText);
        assert!(matches!(
            l.classify_region(45_106, 0),
            Err(Error::Bounds { index: 45_106, .. })
        ));
        let wan = TokenLayout::new(0, 21, 3600);
        assert_eq!(wan.classify_region(0, 75_599).unwrap(), RegionKind::VideoVideo);
    }

    #[test]
    fn validate_rejects_zero_block() {
        assert!(TokenLayout::new(1, 1, 1).with_block_size(0).validate().is_err());
        assert!(TokenLayout::new(0, 0, 5).validate().is_err());
    }

    proptest! {
        #[test]
        fn regions_tile_and_blocks_cover(
            text in 0usize..20, frames in 1usize..5, tpf in 1usize..20, bs in 1usize..16,
        ) {
            let l = TokenLayout::new(text, frames, tpf).with_block_size(bs);
            let n = l.total_tokens();
            let regions = l.regions();
            for i in 0..n {
                for j in 0..n {
                    let hits: Vec<_> = regions.iter().filter(|r| r.contains(i, j)).collect();
                    prop_assert_eq!(hits.len(), 1);
                    prop_assert_eq!(hits[0].kind, l.classify_region(i, j).unwrap());
                }
            }
            let grid = l.block_grid();
            let covered: usize = grid.blocks().iter().map(|b| b.tokens.len()).sum();
            prop_assert_eq!(covered, n);
            for t in 0..n {
                prop_assert!(grid.blocks()[grid.block_of(t)].tokens.contains(&t));
            }
            let frames: Vec<_> = grid.blocks().iter().filter_map(|b| b.frame).collect();
            prop_assert!(frames.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
