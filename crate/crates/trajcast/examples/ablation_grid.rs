//! Small configuration grid plus a spatial-threshold sweep on
//! interaction-coupled scenes.
//!
//!   cargo run --release --example ablation_grid

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{split_train_val, synth_scenes, MotionFamily, SynthConfig};
use trajcast::model::ModelConfig;
use trajcast::train::{dclose_sweep_entries, run_ablation, AblationEntry, TrainConfig};

fn main() -> trajcast::Result<()> {
    let data_cfg = SynthConfig {
        scenes: 100,
        agents_min: 4,
        agents_max: 4,
        families: vec![MotionFamily::Coupled],
        spawn_half_width: 60.0,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let clips = synth_scenes(&data_cfg, &mut rng)?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(102);
    let (train_set, val_set) = split_train_val(clips, 0.2, &mut split_rng)?;
    let n_max = train_set
        .iter()
        .chain(&val_set)
        .map(|c| c.num_agents())
        .max()
        .unwrap();

    let base_model = ModelConfig {
        channels: 16,
        num_blocks: 2,
        use_batch_norm: false,
        hidden_multiplier: 4,
        ensemble: 1,
        dropout: 0.0,
        n_max,
        ..ModelConfig::default()
    };
    let base_training = TrainConfig {
        epochs: 60,
        batch_size: 16,
        learning_rate: 3e-3,
        augment_rotation: true,
        seed: 1,
        cv_window: 1,
    };

    let entries = vec![
        AblationEntry {
            label: "fixed_only".into(),
            model: ModelConfig {
                use_trainable_graph: false,
                ..base_model.clone()
            },
            training: base_training.clone(),
        },
        AblationEntry {
            label: "fixed_plus_train".into(),
            model: base_model.clone(),
            training: base_training.clone(),
        },
        AblationEntry {
            label: "no_residual".into(),
            model: ModelConfig {
                residual: false,
                ..base_model.clone()
            },
            training: base_training.clone(),
        },
    ];
    println!(
        "grid ({} train / {} val clips):",
        train_set.len(),
        val_set.len()
    );
    for row in run_ablation(&entries, &train_set, &val_set) {
        println!(
            "  {:16} graph={:11} residual={:5} val ADE {}",
            row.label,
            row.graph,
            row.residual,
            row.val_ade.map_or("failed".into(), |v| format!("{v:.4}")),
        );
    }

    println!("spatial threshold sweep:");
    let sweep = dclose_sweep_entries(&base_model, &base_training, &[0.0, 25.0, 50.0]);
    for row in run_ablation(&sweep, &train_set, &val_set) {
        println!(
            "  d_close {:5.1}: val ADE {}",
            row.d_close,
            row.val_ade.map_or("failed".into(), |v| format!("{v:.4}")),
        );
    }
    Ok(())
}
