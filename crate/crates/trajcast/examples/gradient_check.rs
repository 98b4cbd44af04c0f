//! Verify analytic gradients against central finite differences: every
//! tensor op, then an end-to-end model loss.
//!
//!   cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{synth_scenes, MotionFamily, SynthConfig};
use trajcast::model::{ModelConfig, ModelParams};
use trajcast::preprocess::InputMode;
use trajcast::tensor::{gradcheck, Phase};
use trajcast::train::{ensemble_loss, prepare_sample};

fn main() -> trajcast::Result<()> {
    println!("per-op checks (3 seeds, worst relative error):");
    let mut worst: std::collections::BTreeMap<&str, f64> = Default::default();
    for seed in 0..3 {
        for (name, err) in gradcheck::op_gradient_checks(seed)? {
            let slot = worst.entry(name).or_insert(0.0);
            *slot = slot.max(err);
        }
    }
    for (name, err) in &worst {
        println!("  {name:24} {err:.3e}");
    }

    let data_cfg = SynthConfig {
        scenes: 1,
        agents_min: 3,
        agents_max: 3,
        families: vec![MotionFamily::Turn],
        t_history: 4,
        t_future: 3,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clips = synth_scenes(&data_cfg, &mut rng)?;
    let sample = prepare_sample(&clips[0], InputMode::Velocity, 25.0, None)?;

    let model_cfg = ModelConfig {
        channels: 8,
        num_blocks: 2,
        hidden_multiplier: 2,
        ensemble: 2,
        dropout: 0.0,
        n_max: 3,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&model_cfg, 0)?;
    // Check at a generic point: the zero-initialized readouts would place
    // constant-velocity agents exactly on the distance loss's kink.
    let mut jitter = ChaCha8Rng::seed_from_u64(42);
    for (name, tensor) in params.named_tensors() {
        if name.contains("readout") || name.contains("graph_") {
            let data = (0..tensor.numel())
                .map(|_| jitter.gen_range(-0.1..0.1))
                .collect();
            tensor.set_data(data)?;
        }
    }
    let inputs = params.trainable();
    let n_params: usize = inputs.iter().map(|t| t.numel()).sum();
    let err = gradcheck::check_gradients(
        &inputs,
        move |tape| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Ok(
                ensemble_loss(tape, &sample, &params, Phase::Train, &mut rng)?
                    .expect("sample has observed futures"),
            )
        },
        gradcheck::DEFAULT_STEP,
    )?;
    println!("\nfull model ({n_params} parameters): worst relative error {err:.3e}");
    Ok(())
}
