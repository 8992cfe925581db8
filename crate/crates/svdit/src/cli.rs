//! The `svdit` command line. Every command that writes files also writes a
//! [`RunManifest`] beside its main output; `svdit repro` replays one.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use svdit_core::attention::attention_probs;
use svdit_core::costmodel::{config_cost, CostReport};
use svdit_core::layout::{TokenLayout, DEFAULT_BLOCK_SIZE};
use svdit_core::metrics::{compare_trajectories, QualityReport};
use svdit_core::model::{build_model, denoise, layer_forward, Model};
use svdit_core::patterns::{build_mask, Mode, ModeMask, PatternParams, PatternSpec};
use svdit_core::search::{mode_histogram, run_search, Aggregate, PatternConfig, PenaltyConvention, SearchParams};

use crate::error::{CliError, Result};
use crate::format;
use crate::timing::measure_latency;

/// PSNR peak and SSIM data range used for all quality reports.
pub const PSNR_PEAK: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "svdit", version, about = "Block-sparse attention search and inference for a toy video diffusion transformer")]
pub struct Cli {
    /// Worker threads for the attention kernels (default: all cores; timing runs default to 1).
    #[arg(long, global = true, env = "SVDIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "snake_case")]
pub enum Command {
    /// Materialize a model (weights and planted heads) from a spec.
    Plant(PlantArgs),
    /// Run the offline sparse search and write a pattern config.
    Search(SearchArgs),
    /// Denoise one seed, optionally under a pattern config.
    Infer(InferArgs),
    /// Theoretical cost of a config, optionally with measured latency.
    Bench(BenchArgs),
    /// Dump a block mask, or a dense attention map, as PGM.
    Mask(MaskArgs),
    /// Compare two trajectory files.
    Compare(CompareArgs),
    /// Re-run the command recorded in a manifest.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PlantArgs {
    /// Model spec JSON.
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyArg {
    #[default]
    #[value(name = "eq2_density")]
    Eq2Density,
    #[value(name = "alg1_sparsity")]
    Alg1Sparsity,
}

impl From<PenaltyArg> for PenaltyConvention {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Eq2Density => PenaltyConvention::Eq2Density,
            PenaltyArg::Alg1Sparsity => PenaltyConvention::Alg1Sparsity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateArg {
    #[default]
    #[value(name = "per_step")]
    PerStep,
    #[value(name = "majority_over_steps")]
    MajorityOverSteps,
}

impl From<AggregateArg> for Aggregate {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::PerStep => Aggregate::PerStep,
            AggregateArg::MajorityOverSteps => Aggregate::MajorityOverSteps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Comma-separated calibration seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t)]
    pub penalty: PenaltyArg,
    #[arg(long, value_enum, default_value_t)]
    pub aggregate: AggregateArg,
    /// Config JSON; the search log goes to `<stem>.log.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Pattern config; dense attention everywhere when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory file `[T+1, 1, N, D]`.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference trajectory; writes `<stem>.quality.json` beside the output.
    #[arg(long)]
    pub metrics_against: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Pattern config; all-full when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also time this many denoising runs (at least 3) after one warmup run.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Full,
    Skip,
    Diagonal,
    #[value(name = "multi_diagonal")]
    MultiDiagonal,
    #[value(name = "vertical_stripe")]
    VerticalStripe,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Skip => Mode::Skip,
            ModeArg::Diagonal => Mode::Diagonal,
            ModeArg::MultiDiagonal => Mode::MultiDiagonal,
            ModeArg::VerticalStripe => Mode::VerticalStripe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MaskArgs {
    /// Pattern to draw (one pixel per block).
    #[arg(long, value_enum, required_unless_present = "attention_map")]
    pub mode: Option<ModeArg>,
    /// Take the token layout from a model file.
    #[arg(long, conflicts_with_all = ["blocks", "frames", "tokens_per_frame", "text"])]
    pub model: Option<PathBuf>,
    /// Square grid of this many video blocks and no text.
    #[arg(long, conflicts_with_all = ["frames", "tokens_per_frame", "text"])]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub text: Option<usize>,
    #[arg(long, requires = "tokens_per_frame")]
    pub frames: Option<usize>,
    #[arg(long, requires = "frames")]
    pub tokens_per_frame: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Band half-width in blocks (diagonal and multi-diagonal).
    #[arg(long)]
    pub halfwidth: Option<usize>,
    /// Multi-diagonal period in blocks.
    #[arg(long)]
    pub period: Option<usize>,
    /// Comma-separated stripe key-block columns.
    #[arg(long, value_delimiter = ',')]
    pub stripes: Option<Vec<usize>>,
    #[arg(long)]
    pub stripe_count: Option<usize>,
    /// Dump the dense attention map of one head instead (one pixel per token pair).
    #[arg(long, requires_all = ["model", "layer", "head"], conflicts_with = "mode")]
    pub attention_map: bool,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub head: Option<usize>,
    /// Latent seed for the attention map.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub candidate: PathBuf,
    /// Model whose layout defines frames; one frame of all tokens otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproArgs {
    pub manifest: PathBuf,
    /// Re-run into a scratch directory and require byte-identical outputs.
    #[arg(long)]
    pub verify: bool,
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved arguments, with absolute paths.
    pub args: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
}

impl RunManifest {
    pub fn to_command(&self) -> Result<Command> {
        let tagged = serde_json::json!({ "command": self.command, "args": self.args });
        serde_json::from_value(tagged).map_err(|e| CliError::Usage(format!("manifest does not describe a command: {e}")))
    }
}

/// Files a command read and wrote.
#[derive(Debug, Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
}

/// `dir/model.json` → `dir/model.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

fn absolute(p: &mut PathBuf) -> Result<()> {
    *p = std::path::absolute(&*p).map_err(|e| CliError::io(&*p, e))?;
    Ok(())
}

fn absolute_opt(p: &mut Option<PathBuf>) -> Result<()> {
    p.as_mut().map_or(Ok(()), absolute)
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Plant(_) => "plant",
            Command::Search(_) => "search",
            Command::Infer(_) => "infer",
            Command::Bench(_) => "bench",
            Command::Mask(_) => "mask",
            Command::Compare(_) => "compare",
            Command::Repro(_) => "repro",
        }
    }

    /// Main output path, beside which the manifest goes.
    fn primary_output(&self) -> Option<&Path> {
        match self {
            Command::Plant(a) => Some(&a.out),
            Command::Search(a) => Some(&a.out),
            Command::Infer(a) => Some(&a.out),
            Command::Bench(a) => a.out.as_deref(),
            Command::Mask(a) => Some(&a.out),
            Command::Compare(a) => a.out.as_deref(),
            Command::Repro(_) => None,
        }
    }

    fn make_absolute(&mut self) -> Result<()> {
        match self {
            Command::Plant(a) => {
                absolute(&mut a.spec)?;
                absolute(&mut a.out)
            }
            Command::Search(a) => {
                absolute(&mut a.model)?;
                absolute(&mut a.out)
            }
            Command::Infer(a) => {
                absolute(&mut a.model)?;
                absolute_opt(&mut a.config)?;
                absolute_opt(&mut a.metrics_against)?;
                absolute(&mut a.out)
            }
            Command::Bench(a) => {
                absolute(&mut a.model)?;
                absolute_opt(&mut a.config)?;
                absolute_opt(&mut a.out)
            }
            Command::Mask(a) => {
                absolute_opt(&mut a.model)?;
                absolute(&mut a.out)
            }
            Command::Compare(a) => {
                absolute(&mut a.reference)?;
                absolute(&mut a.candidate)?;
                absolute_opt(&mut a.model)?;
                absolute_opt(&mut a.out)
            }
            Command::Repro(a) => absolute(&mut a.manifest),
        }
    }

    /// Moves the primary output (and with it every derived output) into `dir`.
    fn redirect_outputs(&mut self, dir: &Path) {
        let move_into = |p: &mut PathBuf| *p = dir.join(p.file_name().unwrap_or_default());
        match self {
            Command::Plant(a) => move_into(&mut a.out),
            Command::Search(a) => move_into(&mut a.out),
            Command::Infer(a) => move_into(&mut a.out),
            Command::Bench(a) => a.out.iter_mut().for_each(move_into),
            Command::Mask(a) => move_into(&mut a.out),
            Command::Compare(a) => a.out.iter_mut().for_each(move_into),
            Command::Repro(_) => {}
        }
    }
}

/// Entry point behind `main`: configures the thread pool and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if the global pool already exists, e.g. in-process reuse.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    execute(cli.command, cli.threads).map(|_| ())
}

/// Runs one command and writes its manifest. Returns the manifest, if any.
pub fn execute(mut command: Command, threads: Option<usize>) -> Result<Option<RunManifest>> {
    if let Command::Repro(args) = command {
        return repro(&args).map(|_| None);
    }
    command.make_absolute()?;
    let outcome = dispatch(&command, threads)?;
    let Some(out) = command.primary_output() else {
        return Ok(None);
    };
    let manifest_file = manifest_path(out);
    let args = serde_json::to_value(&command).map_err(|e| CliError::Internal(e.to_string()))?;
    let manifest = RunManifest {
        tool: "svdit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        args: args["args"].clone(),
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        seeds: outcome.seeds,
        threads,
    };
    format::write_json(&manifest_file, &manifest)?;
    Ok(Some(manifest))
}

fn dispatch(command: &Command, threads: Option<usize>) -> Result<Outcome> {
    match command {
        Command::Plant(a) => cmd_plant(a),
        Command::Search(a) => cmd_search(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Bench(a) => cmd_bench(a, threads),
        Command::Mask(a) => cmd_mask(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Repro(_) => Err(CliError::Usage("repro cannot be nested".into())),
    }
}

fn cmd_plant(a: &PlantArgs) -> Result<Outcome> {
    let spec = format::read_spec(&a.spec)?;
    let model = build_model(&spec)?;
    format::write_model(&a.out, &model)?;
    Ok(Outcome {
        inputs: vec![a.spec.clone()],
        outputs: vec![a.out.clone()],
        seeds: vec![spec.seed],
    })
}

fn cmd_search(a: &SearchArgs) -> Result<Outcome> {
    let model = format::read_model(&a.model)?;
    let params = SearchParams {
        lambda: a.lambda,
        epsilon: a.epsilon,
        calibration_seeds: a.seeds.clone(),
        penalty: a.penalty.into(),
        aggregate: a.aggregate.into(),
        pattern: None,
    };
    let outcome = run_search(&model, &params)?;
    let log = sibling(&a.out, "log.json");
    format::write_config(&a.out, &outcome.config)?;
    format::write_json(&log, &outcome.log)?;
    let hist = mode_histogram(&outcome.config);
    let sparsity = outcome.config.mean_sparsity(&model.grid())?;
    print_line(&format!(
        "modes full={} skip={} diagonal={} multi_diagonal={} vertical_stripe={}; mean sparsity {sparsity:.4}",
        hist[0], hist[1], hist[2], hist[3], hist[4]
    ));
    Ok(Outcome {
        inputs: vec![a.model.clone()],
        outputs: vec![a.out.clone(), log],
        seeds: a.seeds.clone(),
    })
}

/// The config file at `path`, or all-full for `model` when absent.
fn config_or_full(path: Option<&Path>, model: &Model) -> Result<PatternConfig> {
    let spec = &model.spec;
    let dims = (spec.timesteps, spec.layers, spec.heads);
    match path {
        Some(p) => {
            let config = format::read_config(p)?;
            if config.dims() != dims {
                return Err(CliError::format(
                    p,
                    format!("config dims {:?} do not match model dims {dims:?}", config.dims()),
                ));
            }
            if config.params.block_size != spec.layout.block_size {
                return Err(CliError::format(p, "config block size differs from the model layout"));
            }
            Ok(config)
        }
        None => Ok(PatternConfig::uniform(dims, Mode::Full, PatternParams::for_layout(&spec.layout))?),
    }
}

fn cmd_infer(a: &InferArgs) -> Result<Outcome> {
    let model = format::read_model(&a.model)?;
    let config = config_or_full(a.config.as_deref(), &model)?;
    let traj = denoise(&model, &config, a.seed)?;
    format::write_trajectory(&a.out, &traj)?;
    let mut inputs = vec![a.model.clone()];
    inputs.extend(a.config.clone());
    let mut outputs = vec![a.out.clone()];
    if let Some(reference) = &a.metrics_against {
        let ref_traj = format::read_trajectory(reference)?;
        let report = compare_trajectories(&ref_traj, &traj, &model.spec.layout, PSNR_PEAK)?;
        let path = sibling(&a.out, "quality.json");
        format::write_json(&path, &report)?;
        print_json(&report)?;
        inputs.push(reference.clone());
        outputs.push(path);
    }
    Ok(Outcome {
        inputs,
        outputs,
        seeds: vec![a.seed],
    })
}

/// Cost report of `config`, with latency timed on a dedicated pool of
/// `threads` workers (1 by default, for stable medians).
pub fn bench(model: &Model, config: &PatternConfig, repeats: Option<usize>, seed: u64, threads: Option<usize>) -> Result<CostReport> {
    let mut report = config_cost(&model.spec, config)?;
    if let Some(repeats) = repeats {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(1))
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let stats = pool.install(|| measure_latency(model, config, repeats, seed))?;
        report.wall_clock = Some(stats.median_seconds);
    }
    Ok(report)
}

fn cmd_bench(a: &BenchArgs, threads: Option<usize>) -> Result<Outcome> {
    let model = format::read_model(&a.model)?;
    let config = config_or_full(a.config.as_deref(), &model)?;
    let report = bench(&model, &config, a.repeats, a.seed, threads)?;
    print_json(&report)?;
    let mut inputs = vec![a.model.clone()];
    inputs.extend(a.config.clone());
    if let Some(out) = &a.out {
        format::write_json(out, &report)?;
    }
    Ok(Outcome {
        inputs,
        outputs: a.out.iter().cloned().collect(),
        seeds: vec![a.seed],
    })
}

fn mask_layout(a: &MaskArgs) -> Result<TokenLayout> {
    let bs = a.block_size.unwrap_or(DEFAULT_BLOCK_SIZE);
    let layout = if let Some(path) = &a.model {
        let layout = format::read_model(path)?.spec.layout;
        if a.block_size.is_some_and(|b| b != layout.block_size) {
            return Err(CliError::Usage("--block-size conflicts with the model layout".into()));
        }
        layout
    } else if let Some(blocks) = a.blocks {
        TokenLayout::new(0, 1, blocks * bs).with_block_size(bs)
    } else if let (Some(frames), Some(tpf)) = (a.frames, a.tokens_per_frame) {
        TokenLayout::new(a.text.unwrap_or(0), frames, tpf).with_block_size(bs)
    } else {
        return Err(CliError::Usage(
            "give --model, --blocks, or --frames with --tokens-per-frame".into(),
        ));
    };
    layout.validate()?;
    Ok(layout)
}

fn mask_spec(a: &MaskArgs, mode: Mode, params: &PatternParams) -> PatternSpec {
    match mode {
        Mode::Full => PatternSpec::Full,
        Mode::Skip => PatternSpec::Skip,
        Mode::Diagonal => PatternSpec::Diagonal {
            band_halfwidth: a.halfwidth.unwrap_or(params.diagonal_halfwidth),
        },
        Mode::MultiDiagonal => PatternSpec::MultiDiagonal {
            period: Some(a.period.unwrap_or(params.multi_period)),
            band_halfwidth: a.halfwidth.unwrap_or(params.multi_halfwidth),
        },
        Mode::VerticalStripe => PatternSpec::VerticalStripe {
            stripe_count: a
                .stripes
                .as_ref()
                .map(Vec::len)
                .or(a.stripe_count)
                .unwrap_or(params.stripe_count),
            stripes: a.stripes.clone(),
        },
    }
}

fn cmd_mask(a: &MaskArgs) -> Result<Outcome> {
    let mut inputs: Vec<PathBuf> = a.model.iter().cloned().collect();
    let bytes = if a.attention_map {
        let path = a.model.as_ref().ok_or_else(|| CliError::Usage("--attention-map needs --model".into()))?;
        let model = format::read_model(path)?;
        let (layer, head) = (a.layer.unwrap_or(0), a.head.unwrap_or(0));
        if layer >= model.spec.layers || head >= model.spec.heads {
            return Err(CliError::Usage(format!("no head ({layer}, {head}) in this model")));
        }
        let full = vec![PatternSpec::Full; model.spec.heads];
        let mut x = model.initial_latent(a.seed);
        for l in 0..layer {
            x = layer_forward(&model, l, &x, &full)?;
        }
        let (q, k, _) = model.attention_inputs(layer, &x)?;
        let probs = attention_probs(&q, &k, None)?;
        format::attention_map_to_pgm(probs.head(0, head), model.spec.tokens())
    } else {
        let layout = mask_layout(a)?;
        let mode: Mode = a.mode.ok_or_else(|| CliError::Usage("--mode is required".into()))?.into();
        let grid = layout.block_grid();
        let spec = mask_spec(a, mode, &PatternParams::for_layout(&layout));
        match build_mask(&spec, &grid)? {
            ModeMask::Blocks(mask) => format::mask_to_pgm(&mask),
            ModeMask::Skip => format::encode_pgm(grid.len(), grid.len(), &vec![0; grid.len() * grid.len()]),
        }
    };
    format::write_bytes(&a.out, &bytes)?;
    inputs.dedup();
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone()],
        seeds: if a.attention_map { vec![a.seed] } else { Vec::new() },
    })
}

fn cmd_compare(a: &CompareArgs) -> Result<Outcome> {
    let reference = format::read_trajectory(&a.reference)?;
    let candidate = format::read_trajectory(&a.candidate)?;
    let last = reference.final_latent();
    let layout = match &a.model {
        Some(p) => format::read_model(p)?.spec.layout,
        None => TokenLayout::new(0, 1, last.rows).with_block_size(last.rows.max(1)),
    };
    let report: QualityReport = compare_trajectories(&reference, &candidate, &layout, PSNR_PEAK)?;
    print_json(&report)?;
    if let Some(out) = &a.out {
        format::write_json(out, &report)?;
    }
    let mut inputs = vec![a.reference.clone(), a.candidate.clone()];
    inputs.extend(a.model.clone());
    Ok(Outcome {
        inputs,
        outputs: a.out.iter().cloned().collect(),
        seeds: Vec::new(),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    print_line(&text);
    Ok(())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Replays a manifest. With `verify`, outputs go to a scratch directory and
/// must match the recorded ones byte for byte.
pub fn repro(a: &ReproArgs) -> Result<()> {
    let manifest: RunManifest = format::read_json(&a.manifest)?;
    let mut command = manifest.to_command()?;
    if matches!(command, Command::Repro(_)) {
        return Err(CliError::Usage("repro cannot be nested".into()));
    }
    if !a.verify {
        execute(command, manifest.threads)?;
        return Ok(());
    }
    let scratch = std::env::temp_dir().join(format!(
        "svdit-repro-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos())
    ));
    std::fs::create_dir_all(&scratch).map_err(|e| CliError::io(&scratch, e))?;
    command.redirect_outputs(&scratch);
    let result = execute(command, manifest.threads).and_then(|rerun| {
        let rerun = rerun.ok_or_else(|| CliError::Usage("manifest command writes no files".into()))?;
        if rerun.outputs.len() != manifest.outputs.len() {
            return Err(CliError::Internal("replay produced a different set of outputs".into()));
        }
        for (old, new) in manifest.outputs.iter().zip(&rerun.outputs) {
            let a = std::fs::read(old).map_err(|e| CliError::io(old, e))?;
            let b = std::fs::read(new).map_err(|e| CliError::io(new, e))?;
            if a != b {
                return Err(CliError::Internal(format!(
                    "replayed output differs from {}",
                    old.display()
                )));
            }
        }
        print_line(&format!("verified {} output(s)", rerun.outputs.len()));
        Ok(())
    });
    let _ = std::fs::remove_dir_all(&scratch);
    result
}
