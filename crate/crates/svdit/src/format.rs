//! On-disk formats.
//!
//! * Tensors: 20-byte header — magic `SVDT`, then `B, H, N, d` as little-endian
//!   `u32` — followed by the little-endian `f32` payload in `[B, H, N, d]`
//!   order. Trajectories are stored as `[T + 1, 1, N, D]`.
//! * Masks and attention maps: binary PGM (`P5`), maxval 255.
//! * Everything structured: JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use svdit_core::model::{Model, ModelSpec, Trajectory};
use svdit_core::numerics::{Matrix, Shape4, Tensor4};
use svdit_core::patterns::{BlockMask, Mode, PatternParams};
use svdit_core::search::{PatternConfig, PenaltyConvention};

use crate::error::{CliError, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"SVDT";
pub const TENSOR_HEADER_LEN: usize = 20;

pub fn encode_tensor(t: &Tensor4) -> Vec<u8> {
    let s = t.shape();
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 4 * t.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    for dim in [s.batch, s.heads, s.tokens, s.dim] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> std::result::Result<Tensor4, String> {
    if bytes.len() < TENSOR_HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
        return Err("not an SVDT tensor file".into());
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape4::new(dim(0), dim(1), dim(2), dim(3));
    let payload = &bytes[TENSOR_HEADER_LEN..];
    let expected = shape
        .batch
        .checked_mul(shape.heads)
        .and_then(|n| n.checked_mul(shape.tokens))
        .and_then(|n| n.checked_mul(shape.dim))
        .and_then(|n| n.checked_mul(4))
        .ok_or("tensor dimensions overflow")?;
    if payload.len() != expected {
        return Err(format!(
            "payload has {} bytes, header {:?} needs {expected}",
            payload.len(),
            shape
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor4::from_vec(shape, data).map_err(|e| e.to_string())
}

pub fn write_tensor(path: &Path, t: &Tensor4) -> Result<()> {
    write_bytes(path, &encode_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<Tensor4> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_tensor(&bytes).map_err(|m| CliError::format(path, m))
}

/// Stacks `x_T .. x_0` into `[T + 1, 1, N, D]`.
pub fn trajectory_to_tensor(traj: &Trajectory) -> Tensor4 {
    let first = &traj.steps[0];
    let shape = Shape4::new(traj.steps.len(), 1, first.rows, first.cols);
    let data = traj.steps.iter().flat_map(|m| m.data.iter().copied()).collect();
    Tensor4::from_vec(shape, data).expect("trajectory steps share one shape")
}

pub fn tensor_to_trajectory(t: &Tensor4) -> std::result::Result<Trajectory, String> {
    let s = t.shape();
    if s.heads != 1 || s.batch == 0 {
        return Err(format!("expected a [T+1, 1, N, D] trajectory, got {s:?}"));
    }
    let steps = (0..s.batch)
        .map(|b| Matrix::from_vec(s.tokens, s.dim, t.head(b, 0).to_vec()).map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Trajectory { steps })
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_tensor(path, &trajectory_to_tensor(traj))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    tensor_to_trajectory(&read_tensor(path)?).map_err(|m| CliError::format(path, m))
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary PGM with maxval 255 (no comments).
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err("expected a P5 PGM with maxval 255".into());
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| e.to_string());
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    let pixels = &bytes[(pos + 1).min(bytes.len())..];
    if pixels.len() != w * h {
        return Err(format!("PGM has {} pixels, header says {w}x{h}", pixels.len()));
    }
    Ok((w, h, pixels.to_vec()))
}

/// One pixel per block, 255 for active blocks.
pub fn mask_to_pgm(mask: &BlockMask) -> Vec<u8> {
    let n = mask.blocks();
    let pixels: Vec<u8> = (0..n * n)
        .map(|i| if mask.is_active(i / n, i % n) { 255 } else { 0 })
        .collect();
    encode_pgm(n, n, &pixels)
}

/// One pixel per token pair, scaled so the largest probability maps to 255.
pub fn attention_map_to_pgm(map: &[f32], tokens: usize) -> Vec<u8> {
    let max = map.iter().copied().fold(0f32, f32::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let pixels: Vec<u8> = map.iter().map(|&p| (p * scale).round().clamp(0.0, 255.0) as u8).collect();
    encode_pgm(tokens, tokens, &pixels)
}

/// JSON shape of a [`PatternConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dims: [usize; 3],
    /// `modes[t][l][h]` as mode indices 0..=4.
    pub modes: Vec<Vec<Vec<u8>>>,
    /// Keyed `"l,h"`.
    pub stripes: BTreeMap<String, Vec<usize>>,
    pub params: PatternParams,
    pub penalty: PenaltyConvention,
    pub seed_set: Vec<u64>,
}

impl ConfigFile {
    pub fn from_config(c: &PatternConfig) -> Self {
        let (t, l, h) = c.dims();
        let modes = (0..t)
            .map(|s| {
                (0..l)
                    .map(|li| c.modes()[(s * l + li) * h..(s * l + li + 1) * h].iter().map(|&m| m as u8).collect())
                    .collect()
            })
            .collect();
        let stripes = c
            .stripes()
            .iter()
            .map(|(&(l, h), cols)| (format!("{l},{h}"), cols.clone()))
            .collect();
        Self {
            dims: [t, l, h],
            modes,
            stripes,
            params: c.params,
            penalty: c.penalty,
            seed_set: c.seed_set.clone(),
        }
    }

    pub fn into_config(self) -> std::result::Result<PatternConfig, String> {
        let [t, l, h] = self.dims;
        if self.modes.len() != t || self.modes.iter().any(|s| s.len() != l || s.iter().any(|r| r.len() != h)) {
            return Err(format!("modes array does not match dims {:?}", self.dims));
        }
        let modes = self
            .modes
            .iter()
            .flatten()
            .flatten()
            .map(|&m| Mode::from_index(m).map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut stripes = BTreeMap::new();
        for (key, cols) in self.stripes {
            let parsed = key
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            let Some((li, hi)) = parsed else {
                return Err(format!("stripe key {key:?} is not \"layer,head\""));
            };
            if li >= l || hi >= h {
                return Err(format!("stripe key {key:?} outside dims {:?}", self.dims));
            }
            stripes.insert((li, hi), cols);
        }
        let mut config = PatternConfig::from_parts((t, l, h), modes, stripes, self.params).map_err(|e| e.to_string())?;
        config.penalty = self.penalty;
        config.seed_set = self.seed_set;
        Ok(config)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_config(path: &Path) -> Result<PatternConfig> {
    let file: ConfigFile = read_json(path)?;
    file.into_config().map_err(|m| CliError::format(path, m))
}

pub fn write_config(path: &Path, config: &PatternConfig) -> Result<()> {
    write_json(path, &ConfigFile::from_config(config))
}

pub fn read_spec(path: &Path) -> Result<ModelSpec> {
    let spec: ModelSpec = read_json(path)?;
    spec.validate()?;
    Ok(spec)
}

/// Models are written compactly: they are mostly weights.
pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    let mut bytes = serde_json::to_vec(model).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_model(path: &Path) -> Result<Model> {
    let model: Model = read_json(path)?;
    model.validate()?;
    Ok(model)
}
