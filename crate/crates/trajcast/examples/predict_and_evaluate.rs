//! Train briefly, predict held-out scenes, and score the predictions with
//! displacement metrics next to the constant-velocity baseline.
//!
//!   cargo run --release --example predict_and_evaluate

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{split_train_val, synth_scenes, MotionFamily, SynthConfig, Unit};
use trajcast::model::{ModelConfig, ModelParams};
use trajcast::train::{
    compute_metrics, cv_baseline, predict_sample, prepare_samples, train, MetricsReport,
    ScenePrediction, TrainConfig,
};

fn show(label: &str, report: &MetricsReport) {
    println!(
        "  {label:12} ade {:.4}  fde {:.4}  wsade {}",
        report.ade_all.unwrap_or(f64::NAN),
        report.fde_all.unwrap_or(f64::NAN),
        report
            .wsade
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
    );
    for h in &report.rmse_per_second {
        println!("    rmse @ {}s: {:.4} {}", h.second, h.rmse, report.unit);
    }
}

fn main() -> trajcast::Result<()> {
    let data_cfg = SynthConfig {
        scenes: 120,
        agents_min: 2,
        agents_max: 3,
        families: vec![MotionFamily::LaneChange, MotionFamily::Turn],
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clips = synth_scenes(&data_cfg, &mut rng)?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(3);
    let (train_set, val_set) = split_train_val(clips, 0.2, &mut split_rng)?;
    let n_max = train_set
        .iter()
        .chain(&val_set)
        .map(|c| c.num_agents())
        .max()
        .unwrap();

    let model_cfg = ModelConfig {
        channels: 16,
        num_blocks: 2,
        use_batch_norm: false,
        hidden_multiplier: 4,
        ensemble: 1,
        dropout: 0.0,
        n_max,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 80,
        batch_size: 16,
        learning_rate: 3e-3,
        augment_rotation: true,
        seed: 9,
        cv_window: 1,
    };
    let mut params = ModelParams::init(&model_cfg, 9)?;
    let outcome = train(&mut params, &train_set, &val_set, &train_cfg)?;
    let best = outcome.best_params;

    let samples = prepare_samples(&val_set, best.config.input_mode, best.config.d_close, None)?;
    let model_items: Vec<ScenePrediction> = samples
        .iter()
        .map(|s| {
            let pred = predict_sample(&best, s).unwrap();
            ScenePrediction {
                pred: pred.positions,
                gt: s.gt_positions.clone(),
                mask: s.future_mask.clone(),
                agent_types: s.agent_types.clone(),
            }
        })
        .collect();
    let cv_items: Vec<ScenePrediction> = val_set
        .iter()
        .map(|c| {
            let pred = cv_baseline(c, 1).unwrap();
            let t_h = c.t_history;
            ScenePrediction {
                pred: pred.positions,
                gt: c.positions.iter().map(|p| p[t_h..].to_vec()).collect(),
                mask: c.mask.iter().map(|m| m[t_h..].to_vec()).collect(),
                agent_types: c.agent_types.clone(),
            }
        })
        .collect();

    println!("validation metrics over {} scenes:", val_set.len());
    show("model", &compute_metrics(&model_items, 2.0, Unit::Units)?);
    show(
        "cv baseline",
        &compute_metrics(&cv_items, 2.0, Unit::Units)?,
    );
    Ok(())
}
