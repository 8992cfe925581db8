//! Offline sparse diffusion search.
//!
//! For every denoising step, layer and head the search runs all five modes on
//! the same `(q, k, v)`, scores each sparse candidate against the full output
//! with
//!
//! ```text
//! L_i = MSE(O_i, O_0) + λ·(1 - S_i)        i = 1..4
//! ```
//!
//! and keeps full attention only if every `L_i > ε`; otherwise the mode with
//! the smallest loss wins. The selected per-head outputs (not the full ones)
//! feed the rest of the layer, so later layers and steps see the accumulated
//! approximation error.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attention::{attention_probs, dense_attention, fused_layer_attention, group_heads};
use crate::error::{Error, Result};
use crate::layout::BlockGrid;
use crate::model::{solver_step, Model};
use crate::numerics::{mse_slices, Tensor4};
use crate::patterns::{build_mask, Mode, ModeMask, PatternParams, PatternSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyConvention {
    /// `λ·(1 - S)`: penalizes density.
    #[default]
    Eq2Density,
    /// `λ·S`, as literally written in the reference pseudocode. Reproduction only.
    Alg1Sparsity,
}

impl PenaltyConvention {
    pub const fn name(self) -> &'static str {
        match self {
            PenaltyConvention::Eq2Density => "eq2_density",
            PenaltyConvention::Alg1Sparsity => "alg1_sparsity",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    PerStep,
    MajorityOverSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub calibration_seeds: Vec<u64>,
    pub penalty: PenaltyConvention,
    pub aggregate: Aggregate,
    /// Overrides the layout-derived pattern defaults.
    #[serde(default)]
    pub pattern: Option<PatternParams>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            epsilon: 1.0,
            calibration_seeds: vec![0, 1],
            penalty: PenaltyConvention::Eq2Density,
            aggregate: Aggregate::PerStep,
            pattern: None,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParam("lambda must be finite and >= 0".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParam("epsilon must be > 0".into()));
        }
        if self.calibration_seeds.is_empty() {
            return Err(Error::InvalidParam("at least one calibration seed is required".into()));
        }
        Ok(())
    }
}

/// Fixed density ranking used to break vote ties: full is densest, skip sparsest.
const DENSITY_RANK: [Mode; 5] = [
    Mode::Full,
    Mode::MultiDiagonal,
    Mode::Diagonal,
    Mode::VerticalStripe,
    Mode::Skip,
];

fn density_rank(mode: Mode) -> usize {
    DENSITY_RANK.iter().position(|&m| m == mode).unwrap_or(0)
}

/// Majority vote; ties go to the densest candidate.
fn majority(votes: impl IntoIterator<Item = Mode>) -> Mode {
    let mut counts = [0usize; 5];
    for m in votes {
        counts[m as usize] += 1;
    }
    DENSITY_RANK
        .iter()
        .copied()
        .max_by(|&a, &b| {
            counts[a as usize]
                .cmp(&counts[b as usize])
                .then(density_rank(b).cmp(&density_rank(a)))
        })
        .unwrap_or(Mode::Full)
}

/// Mode assignment per `(step, layer, head)` plus the frozen stripe columns of
/// every head that uses the vertical-stripe mode.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternConfig {
    steps: usize,
    layers: usize,
    heads: usize,
    modes: Vec<Mode>,
    stripes: BTreeMap<(usize, usize), Vec<usize>>,
    pub params: PatternParams,
    pub penalty: PenaltyConvention,
    pub seed_set: Vec<u64>,
}

impl PatternConfig {
    pub fn from_parts(
        dims: (usize, usize, usize),
        modes: Vec<Mode>,
        stripes: BTreeMap<(usize, usize), Vec<usize>>,
        params: PatternParams,
    ) -> Result<Self> {
        let (steps, layers, heads) = dims;
        if modes.len() != steps * layers * heads {
            return Err(Error::Config(alloc::format!(
                "{} modes for dims {dims:?}",
                modes.len()
            )));
        }
        let config = Self {
            steps,
            layers,
            heads,
            modes,
            stripes,
            params,
            penalty: PenaltyConvention::default(),
            seed_set: Vec::new(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Every entry set to `mode`. Vertical stripes need explicit columns, so
    /// that mode is rejected here.
    pub fn uniform(dims: (usize, usize, usize), mode: Mode, params: PatternParams) -> Result<Self> {
        if mode == Mode::VerticalStripe {
            return Err(Error::Config("uniform vertical-stripe config needs stripe lists".into()));
        }
        Self::from_parts(dims, vec![mode; dims.0 * dims.1 * dims.2], BTreeMap::new(), params)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.steps, self.layers, self.heads)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    fn index(&self, step: usize, layer: usize, head: usize) -> Result<usize> {
        if step >= self.steps || layer >= self.layers || head >= self.heads {
            return Err(Error::Config(alloc::format!(
                "entry ({step}, {layer}, {head}) outside dims {:?}",
                self.dims()
            )));
        }
        Ok((step * self.layers + layer) * self.heads + head)
    }

    pub fn mode(&self, step: usize, layer: usize, head: usize) -> Result<Mode> {
        Ok(self.modes[self.index(step, layer, head)?])
    }

    pub fn set_mode(&mut self, step: usize, layer: usize, head: usize, mode: Mode) -> Result<()> {
        let i = self.index(step, layer, head)?;
        self.modes[i] = mode;
        Ok(())
    }

    pub fn stripes(&self) -> &BTreeMap<(usize, usize), Vec<usize>> {
        &self.stripes
    }

    pub fn set_stripes(&mut self, layer: usize, head: usize, columns: Vec<usize>) {
        self.stripes.insert((layer, head), columns);
    }

    /// Every vertical-stripe entry must have a nonempty stripe list.
    pub fn validate(&self) -> Result<()> {
        for l in 0..self.layers {
            for h in 0..self.heads {
                let uses_stripes =
                    (0..self.steps).any(|t| self.modes[(t * self.layers + l) * self.heads + h] == Mode::VerticalStripe);
                let ok = self.stripes.get(&(l, h)).is_some_and(|s| !s.is_empty());
                if uses_stripes && !ok {
                    return Err(Error::Config(alloc::format!(
                        "layer {l} head {h} uses vertical stripes without a stripe list"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn head_spec(&self, step: usize, layer: usize, head: usize) -> Result<PatternSpec> {
        let mode = self.mode(step, layer, head)?;
        let stripes = self.stripes.get(&(layer, head)).map(Vec::as_slice);
        if mode == Mode::VerticalStripe && stripes.is_none() {
            return Err(Error::Config(alloc::format!(
                "layer {layer} head {head} has no stripe list"
            )));
        }
        Ok(self.params.spec(mode, stripes))
    }

    pub fn layer_specs(&self, step: usize, layer: usize) -> Result<Vec<PatternSpec>> {
        (0..self.heads).map(|h| self.head_spec(step, layer, h)).collect()
    }

    /// Per-entry block sparsity on `grid`, in `(step, layer, head)` order.
    pub fn entry_sparsities(&self, grid: &BlockGrid) -> Result<Vec<f64>> {
        let mut cache: BTreeMap<PatternSpec, f64> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.modes.len());
        for t in 0..self.steps {
            for l in 0..self.layers {
                for h in 0..self.heads {
                    let spec = self.head_spec(t, l, h)?;
                    let s = match cache.get(&spec) {
                        Some(&s) => s,
                        None => {
                            let s = crate::patterns::sparsity(&spec, grid)?;
                            cache.insert(spec, s);
                            s
                        }
                    };
                    out.push(s);
                }
            }
        }
        Ok(out)
    }

    /// Mean block sparsity over all entries.
    pub fn mean_sparsity(&self, grid: &BlockGrid) -> Result<f64> {
        let s = self.entry_sparsities(grid)?;
        Ok(if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 })
    }

    /// Keeps stripe lists only for heads that use them.
    fn prune_stripes(&mut self) {
        let (steps, layers, heads) = self.dims();
        let modes = &self.modes;
        self.stripes.retain(|&(l, h), _| {
            (0..steps).any(|t| modes[(t * layers + l) * heads + h] == Mode::VerticalStripe)
        });
    }
}

/// `MSE(O_i, O_0)` plus the sparsity penalty of the chosen convention.
pub fn mode_loss(o_i: &[f32], o_0: &[f32], sparsity: f64, lambda: f64, penalty: PenaltyConvention) -> Result<f64> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidParam(alloc::format!(
            "sparsity {sparsity} not in [0, 1]"
        )));
    }
    let mse = mse_slices(o_i, o_0)?;
    Ok(match penalty {
        PenaltyConvention::Eq2Density => mse + lambda * (1.0 - sparsity),
        PenaltyConvention::Alg1Sparsity => mse + lambda * sparsity,
    })
}

/// Losses and sparsities are for modes 1..=4 in order. Full attention is kept
/// iff every loss exceeds `epsilon`; otherwise the smallest loss wins, ties
/// going to the larger sparsity and then the smaller mode index.
pub fn select_mode(losses: [f64; 4], sparsities: [f64; 4], epsilon: f64) -> Mode {
    if losses.iter().all(|&l| l > epsilon) {
        return Mode::Full;
    }
    let mut best = 0;
    for i in 1..4 {
        let better = losses[i] < losses[best]
            || (losses[i] == losses[best] && sparsities[i] > sparsities[best]);
        if better {
            best = i;
        }
    }
    Mode::SPARSE[best]
}

/// Losses of one `(seed, step, layer, head)` evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub seed: u64,
    pub step: usize,
    pub layer: usize,
    pub head: usize,
    /// Losses of modes 1..=4.
    pub losses: [f64; 4],
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub config: PatternConfig,
    pub log: Vec<SearchRecord>,
}

/// Top-`count` key-block columns by total attention mass, preferring blocks
/// that are not already forced active. Returned in ascending order.
pub fn top_stripe_columns(probs: &[f32], grid: &BlockGrid, count: usize) -> Vec<usize> {
    let n = grid.tokens();
    let mut mass = vec![0f64; grid.len()];
    for row in probs.chunks_exact(n) {
        for (j, &p) in row.iter().enumerate() {
            mass[grid.block_of(j)] += p as f64;
        }
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        grid.is_forced(a)
            .cmp(&grid.is_forced(b))
            .then(mass[b].total_cmp(&mass[a]))
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = order.into_iter().take(count).collect();
    top.sort_unstable();
    top
}

struct LayerEval {
    outputs: [Tensor4; 4],
    sparsities: Vec<[f64; 4]>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_layer(
    q: &Tensor4,
    k: &Tensor4,
    v: &Tensor4,
    layer: usize,
    grid: &BlockGrid,
    params: &PatternParams,
    stripes: &BTreeMap<(usize, usize), Vec<usize>>,
    fixed: &[f64; 2],
) -> Result<LayerEval> {
    let heads = q.shape().heads;
    let run = |specs: &[PatternSpec]| -> Result<Tensor4> {
        let groups = group_heads(layer, specs, grid)?;
        fused_layer_attention(q, k, v, &groups)
    };
    let diag = run(&vec![params.spec(Mode::Diagonal, None); heads])?;
    let multi = run(&vec![params.spec(Mode::MultiDiagonal, None); heads])?;
    let stripe_specs: Vec<PatternSpec> = (0..heads)
        .map(|h| params.spec(Mode::VerticalStripe, stripes.get(&(layer, h)).map(Vec::as_slice)))
        .collect();
    let stripe = run(&stripe_specs)?;
    let sparsities = stripe_specs
        .iter()
        .map(|spec| {
            let s4 = build_mask(spec, grid)?.sparsity();
            Ok([1.0, fixed[0], fixed[1], s4])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerEval {
        outputs: [Tensor4::zeros(q.shape()), diag, multi, stripe],
        sparsities,
    })
}

/// Runs the calibration trajectories and returns the frozen config with a
/// per-entry loss log. Deterministic in `(model, params)`.
pub fn run_search(model: &Model, params: &SearchParams) -> Result<SearchOutcome> {
    params.validate()?;
    let spec = &model.spec;
    let (t_steps, layers, heads) = (spec.timesteps, spec.layers, spec.heads);
    let grid = model.grid();
    let pattern = params
        .pattern
        .unwrap_or_else(|| PatternParams::for_layout(&spec.layout));
    if pattern.block_size != spec.layout.block_size {
        return Err(Error::Config(alloc::format!(
            "pattern block size {} differs from layout block size {}",
            pattern.block_size,
            spec.layout.block_size
        )));
    }
    let fixed = [
        build_mask(&pattern.spec(Mode::Diagonal, None), &grid)?.sparsity(),
        build_mask(&pattern.spec(Mode::MultiDiagonal, None), &grid)?.sparsity(),
    ];
    let mut stripes: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut per_seed: Vec<Vec<Mode>> = Vec::new();
    let mut log = Vec::new();

    for &seed in &params.calibration_seeds {
        let mut modes = vec![Mode::Full; t_steps * layers * heads];
        let mut x = model.initial_latent(seed);
        for step in 0..t_steps {
            let mut xp = x.clone();
            for layer in 0..layers {
                let (q, k, v) = model.attention_inputs(layer, &xp)?;
                let full = dense_attention(&q, &k, &v)?;
                if !stripes.contains_key(&(layer, 0)) {
                    let probs = attention_probs(&q, &k, None)?;
                    for h in 0..heads {
                        let cols = top_stripe_columns(probs.head(0, h), &grid, pattern.stripe_count);
                        stripes.insert((layer, h), cols);
                    }
                }
                let eval = evaluate_layer(&q, &k, &v, layer, &grid, &pattern, &stripes, &fixed)?;
                let mut selected = Tensor4::zeros(q.shape());
                for h in 0..heads {
                    let reference = full.head(0, h);
                    let mut losses = [0f64; 4];
                    for (i, out) in eval.outputs.iter().enumerate() {
                        losses[i] = mode_loss(
                            out.head(0, h),
                            reference,
                            eval.sparsities[h][i],
                            params.lambda,
                            params.penalty,
                        )?;
                    }
                    let mode = select_mode(losses, eval.sparsities[h], params.epsilon);
                    let source = match mode {
                        Mode::Full => &full,
                        m => &eval.outputs[m as usize - 1],
                    };
                    selected.head_mut(0, h).copy_from_slice(source.head(0, h));
                    modes[(step * layers + layer) * heads + h] = mode;
                    log.push(SearchRecord {
                        seed,
                        step,
                        layer,
                        head: h,
                        losses,
                        mode,
                    });
                }
                xp = model.layer_output(layer, &xp, &selected)?;
            }
            x = solver_step(&x, &xp, t_steps);
        }
        per_seed.push(modes);
    }

    let modes = if per_seed.len() == 1 {
        per_seed.pop().unwrap_or_default()
    } else {
        (0..t_steps * layers * heads)
            .map(|i| majority(per_seed.iter().map(|m| m[i])))
            .collect()
    };
    let mut config = PatternConfig::from_parts((t_steps, layers, heads), modes, stripes, pattern)?;
    config.penalty = params.penalty;
    config.seed_set = params.calibration_seeds.clone();
    config.prune_stripes();
    if params.aggregate == Aggregate::MajorityOverSteps {
        config = aggregate_config(&config, Aggregate::MajorityOverSteps);
    }
    Ok(SearchOutcome { config, log })
}

/// Collapses the step axis by per-`(layer, head)` majority vote (ties go to
/// the denser mode) and broadcasts the winner to every step.
pub fn aggregate_config(config: &PatternConfig, strategy: Aggregate) -> PatternConfig {
    let mut out = config.clone();
    if strategy == Aggregate::PerStep {
        return out;
    }
    let (steps, layers, heads) = config.dims();
    for l in 0..layers {
        for h in 0..heads {
            let winner = majority((0..steps).map(|t| config.modes[(t * layers + l) * heads + h]));
            for t in 0..steps {
                out.modes[(t * layers + l) * heads + h] = winner;
            }
        }
    }
    out.prune_stripes();
    out
}

/// Which modes were chosen, as counts indexed by mode.
pub fn mode_histogram(config: &PatternConfig) -> [usize; 5] {
    let mut counts = [0; 5];
    for &m in config.modes() {
        counts[m as usize] += 1;
    }
    counts
}

/// Lowered masks of every head of one `(step, layer)` entry.
pub fn lowered_masks(config: &PatternConfig, step: usize, layer: usize, grid: &BlockGrid) -> Result<Vec<ModeMask>> {
    config
        .layer_specs(step, layer)?
        .iter()
        .map(|s| build_mask(s, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::TokenLayout;
    use proptest::prelude::*;

    fn params() -> PatternParams {
        PatternParams::for_layout(&TokenLayout::new(0, 2, 64).with_block_size(16))
    }

    #[test]
    fn mode_loss_examples() {
        let o = [1.0f32, 2.0, 3.0];
        let eq2 = PenaltyConvention::Eq2Density;
        assert!((mode_loss(&o, &o, 0.875, 0.5, eq2).unwrap() - 0.0625).abs() < 1e-15);
        let shifted = [1.5f32, 2.5, 3.5];
        assert_eq!(mode_loss(&shifted, &o, 0.3, 0.0, eq2).unwrap(), 0.25);
        assert_eq!(mode_loss(&shifted, &o, 0.9, 0.0, eq2).unwrap(), 0.25);
        // MSE 0.2 with skip sparsity 1 pays no density penalty.
        let a = [0.2f32.sqrt()];
        let z = [0.0f32];
        let l = mode_loss(&a, &z, 1.0, 0.5, eq2).unwrap();
        assert!((l - 0.2).abs() < 1e-7);
        let alg1 = mode_loss(&o, &o, 0.875, 0.5, PenaltyConvention::Alg1Sparsity).unwrap();
        assert_eq!(alg1, 0.4375);
        assert!(mode_loss(&o, &o, 1.5, 0.5, eq2).is_err());
    }

    #[test]
    fn select_mode_examples() {
        let s = [1.0, 0.8, 0.75, 0.9];
        assert_eq!(select_mode([2.0, 1.5, 3.0, 1.2], s, 1.0), Mode::Full);
        assert_eq!(select_mode([2.0, 0.4, 0.9, 0.4], s, 1.0), Mode::VerticalStripe);
        assert_eq!(select_mode([0.5, 0.6, 0.7, 0.8], s, 1.0), Mode::Skip);
        // Exact tie with equal sparsity falls to the smaller index.
        assert_eq!(select_mode([0.5, 0.3, 0.9, 0.3], [1.0, 0.9, 0.75, 0.9], 1.0), Mode::Diagonal);
        // A loss equal to epsilon does not exceed it.
        assert_eq!(select_mode([1.0, 2.0, 2.0, 2.0], s, 1.0), Mode::Skip);
    }

    #[test]
    fn aggregate_examples() {
        let mk = |modes: &[Mode]| {
            PatternConfig::from_parts((modes.len(), 1, 1), modes.to_vec(), BTreeMap::new(), params()).unwrap()
        };
        let agree = mk(&[Mode::Diagonal; 3]);
        assert_eq!(aggregate_config(&agree, Aggregate::MajorityOverSteps), agree);
        let c = aggregate_config(&mk(&[Mode::Diagonal, Mode::Diagonal, Mode::Full]), Aggregate::MajorityOverSteps);
        assert_eq!(c.modes(), &[Mode::Diagonal; 3]);
        let c = aggregate_config(&mk(&[Mode::Full, Mode::Skip]), Aggregate::MajorityOverSteps);
        assert_eq!(c.modes(), &[Mode::Full; 2]);
        let per_step = mk(&[Mode::Full, Mode::Skip]);
        assert_eq!(aggregate_config(&per_step, Aggregate::PerStep), per_step);
    }

    #[test]
    fn majority_prefers_denser_on_ties() {
        assert_eq!(majority([Mode::Skip, Mode::Diagonal]), Mode::Diagonal);
        assert_eq!(majority([Mode::VerticalStripe, Mode::MultiDiagonal]), Mode::MultiDiagonal);
        assert_eq!(majority([Mode::Skip, Mode::Skip, Mode::Full]), Mode::Skip);
    }

    #[test]
    fn config_requires_stripes_for_stripe_mode() {
        let err = PatternConfig::from_parts((1, 1, 1), vec![Mode::VerticalStripe], BTreeMap::new(), params());
        assert!(matches!(err, Err(Error::Config(_))));
        let mut stripes = BTreeMap::new();
        stripes.insert((0, 0), vec![1]);
        let ok = PatternConfig::from_parts((1, 1, 1), vec![Mode::VerticalStripe], stripes, params()).unwrap();
        assert_eq!(
            ok.head_spec(0, 0, 0).unwrap(),
            PatternSpec::VerticalStripe {
                stripe_count: 1,
                stripes: Some(vec![1])
            }
        );
        assert!(PatternConfig::uniform((1, 1, 1), Mode::VerticalStripe, params()).is_err());
        assert!(ok.mode(1, 0, 0).is_err());
    }

    #[test]
    fn top_stripes_skip_forced_blocks() {
        // 1 text block + 3 video blocks of 2 tokens; all mass on text and block 3.
        let grid = TokenLayout::new(2, 1, 6).with_block_size(2).block_grid();
        let n = 8;
        let mut probs = vec![0f32; n * n];
        for i in 0..n {
            probs[i * n] = 0.7;
            probs[i * n + 7] = 0.3;
        }
        assert_eq!(top_stripe_columns(&probs, &grid, 1), vec![3]);
        assert_eq!(top_stripe_columns(&probs, &grid, 2), vec![1, 3]);
    }

    #[test]
    fn search_rejects_empty_seed_list() {
        let spec = crate::model::ModelSpec::new(1, 2, 4, TokenLayout::new(0, 2, 16).with_block_size(8), 1, 0);
        let model = crate::model::build_model(&spec).unwrap();
        let p = SearchParams {
            calibration_seeds: vec![],
            ..SearchParams::default()
        };
        assert!(matches!(run_search(&model, &p), Err(Error::InvalidParam(_))));
    }

    proptest! {
        #[test]
        fn select_mode_scale_consistent(
            losses in proptest::array::uniform4(0f64..5.0),
            eps in 0.01f64..5.0,
            c in 0.01f64..100.0,
        ) {
            let s = [1.0, 0.9, 0.75, 0.9];
            let scaled = losses.map(|l| l * c);
            prop_assert_eq!(select_mode(losses, s, eps), select_mode(scaled, s, eps * c));
        }

        #[test]
        fn lambda_monotone_when_gate_open(
            mse in proptest::array::uniform4(0f64..2.0),
            s2 in 0f64..1.0, s3 in 0f64..1.0, s4 in 0f64..1.0,
        ) {
            let s = [1.0, s2, s3, s4];
            let mut last = -1.0;
            for lambda in [0.0, 0.1, 0.5, 1.0, 2.0] {
                let losses = core::array::from_fn(|i| mse[i] + lambda * (1.0 - s[i]));
                // Gate never closes: the skip loss is independent of lambda.
                let mode = select_mode(losses, s, 1e9);
                let chosen = s[mode as usize - 1];
                prop_assert!(chosen >= last);
                last = chosen;
            }
        }

        #[test]
        fn epsilon_monotone_for_fixed_losses(
            losses in proptest::array::uniform4(0f64..5.0),
            e1 in 0.01f64..5.0, de in 0f64..5.0,
        ) {
            let s = [1.0, 0.9, 0.75, 0.9];
            let sparsity = |m: Mode| if m == Mode::Full { 0.0 } else { s[m as usize - 1] };
            prop_assert!(sparsity(select_mode(losses, s, e1 + de)) >= sparsity(select_mode(losses, s, e1)));
        }
    }
}
