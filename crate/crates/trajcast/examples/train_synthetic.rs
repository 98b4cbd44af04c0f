//! End-to-end training on synthetic scenes, with a checkpoint round trip.
//!
//!   cargo run --release --example train_synthetic

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajcast::checkpoint::{load_checkpoint, save_checkpoint};
use trajcast::ingest::{split_train_val, synth_scenes, MotionFamily, SynthConfig};
use trajcast::model::{ModelConfig, ModelParams};
use trajcast::train::{train, TrainConfig};

fn main() -> trajcast::Result<()> {
    let data_cfg = SynthConfig {
        scenes: 80,
        agents_min: 2,
        agents_max: 3,
        families: vec![MotionFamily::Turn, MotionFamily::LaneChange],
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clips = synth_scenes(&data_cfg, &mut rng)?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(4);
    let (train_set, val_set) = split_train_val(clips, 0.2, &mut split_rng)?;
    let n_max = train_set
        .iter()
        .chain(&val_set)
        .map(|c| c.num_agents())
        .max()
        .unwrap();
    println!(
        "{} training / {} validation clips, capacity {n_max} agents",
        train_set.len(),
        val_set.len()
    );

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
        epochs: 60,
        batch_size: 16,
        learning_rate: 3e-3,
        augment_rotation: true,
        seed: 1,
        cv_window: 1,
    };
    let mut params = ModelParams::init(&model_cfg, 1)?;
    let outcome = train(&mut params, &train_set, &val_set, &train_cfg)?;
    for stats in outcome.history.iter().step_by(10) {
        println!(
            "epoch {:3}: train loss {:.4}, val loss {:.4}",
            stats.epoch,
            stats.train_loss,
            stats.val_loss.unwrap_or(f64::NAN)
        );
    }
    println!("best validation epoch: {:?}", outcome.best_epoch);

    let path = std::env::temp_dir().join("trajcast_demo.ckpt");
    save_checkpoint(&path, &outcome.best_params)?;
    let reloaded = load_checkpoint(&path)?;
    assert_eq!(reloaded.config, outcome.best_params.config);
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
