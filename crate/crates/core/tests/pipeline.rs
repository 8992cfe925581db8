//! End-to-end checks through the public API: plant, search, infer, cost.

use svdit_core::costmodel::config_cost;
use svdit_core::layout::TokenLayout;
use svdit_core::metrics::compare_trajectories;
use svdit_core::model::{build_model, denoise, Model, ModelSpec, PlantKind};
use svdit_core::patterns::{Mode, PatternParams};
use svdit_core::search::{mode_histogram, run_search, Aggregate, PatternConfig, SearchParams};

fn planted_model() -> Model {
    let layout = TokenLayout::new(16, 4, 64).with_block_size(16);
    let spec = ModelSpec::new(2, 4, 8, layout, 3, 5)
        .with_plant(0, 1, PlantKind::Diagonal)
        .with_plant(1, 2, PlantKind::MultiDiagonal)
        .with_plant(1, 3, PlantKind::Redundant);
    build_model(&spec).unwrap()
}

fn uniform(model: &Model, mode: Mode) -> PatternConfig {
    let s = &model.spec;
    PatternConfig::uniform((s.timesteps, s.layers, s.heads), mode, PatternParams::for_layout(&s.layout)).unwrap()
}

#[test]
fn search_is_deterministic() {
    let model = planted_model();
    let params = SearchParams::default();
    let a = run_search(&model, &params).unwrap();
    let b = run_search(&model, &params).unwrap();
    assert_eq!(a.config, b.config);
    assert_eq!(a.log, b.log);
}

#[test]
fn search_config_matches_model_dims_and_log_covers_every_head() {
    let model = planted_model();
    let s = &model.spec;
    let out = run_search(&model, &SearchParams::default()).unwrap();
    assert_eq!(out.config.dims(), (s.timesteps, s.layers, s.heads));
    let seeds = SearchParams::default().calibration_seeds.len();
    assert_eq!(out.log.len(), seeds * s.timesteps * s.layers * s.heads);
    assert_eq!(mode_histogram(&out.config).iter().sum::<usize>(), s.timesteps * s.layers * s.heads);
}

#[test]
fn majority_aggregate_is_constant_over_steps() {
    let model = planted_model();
    let params = SearchParams {
        aggregate: Aggregate::MajorityOverSteps,
        ..SearchParams::default()
    };
    let config = run_search(&model, &params).unwrap().config;
    let s = &model.spec;
    for l in 0..s.layers {
        for h in 0..s.heads {
            let first = config.mode(0, l, h).unwrap();
            for t in 1..s.timesteps {
                assert_eq!(config.mode(t, l, h).unwrap(), first);
            }
        }
    }
}

#[test]
fn full_config_reproduces_itself_and_skip_degrades() {
    let model = planted_model();
    let full = denoise(&model, &uniform(&model, Mode::Full), 2).unwrap();
    let again = denoise(&model, &uniform(&model, Mode::Full), 2).unwrap();
    let skip = denoise(&model, &uniform(&model, Mode::Skip), 2).unwrap();
    let layout = &model.spec.layout;
    let same = compare_trajectories(&full, &again, layout, 1.0).unwrap();
    assert_eq!(same.mse, 0.0);
    let worse = compare_trajectories(&full, &skip, layout, 1.0).unwrap();
    assert!(worse.mse > 0.0);
    assert!(worse.psnr_db < same.psnr_db);
}

#[test]
fn searched_config_costs_less_than_dense() {
    let model = planted_model();
    let config = run_search(&model, &SearchParams::default()).unwrap().config;
    let report = config_cost(&model.spec, &config).unwrap();
    assert!(report.attention_flops_sparse <= report.attention_flops_dense);
    assert!(report.theoretical_speedup >= 1.0);
    let dense = config_cost(&model.spec, &uniform(&model, Mode::Full)).unwrap();
    assert_eq!(dense.theoretical_speedup, 1.0);
}
