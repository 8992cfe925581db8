//! Block-sparse multi-head attention and offline attention-pattern search for
//! video diffusion transformers.
//!
//! The crate is `no_std` (with `alloc`). It holds everything that is pure
//! computation:
//!
//! - [`numerics`]: a small dense tensor substrate with a seeded counter-based RNG.
//! - [`layout`]: the text + video token sequence and its block grid.
//! - [`patterns`]: the five attention modes lowered to block masks.
//! - [`attention`]: dense oracle, tiled block-sparse kernel, skip, and fused head groups.
//! - [`model`]: a synthetic video DiT with plantable attention patterns.
//! - [`search`]: the offline per-(step, layer, head) mode search.
//! - [`costmodel`]: closed-form FLOP accounting.
//! - [`metrics`]: MSE / PSNR / SSIM on latents.
//!
//! File formats, timing and the command line live in the `svdit` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod attention;
pub mod costmodel;
pub mod error;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod patterns;
pub mod search;

pub use error::{Error, Result};
