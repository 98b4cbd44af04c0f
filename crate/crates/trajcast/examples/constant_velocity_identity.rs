//! With residual decoding and zeroed output projections, the untrained
//! model is *exactly* the constant-velocity baseline: the readout only has
//! to learn changes of velocity.
//!
//!   cargo run --example constant_velocity_identity

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{synth_scenes, MotionFamily, SynthConfig};
use trajcast::model::{predict, ModelConfig, ModelParams};
use trajcast::preprocess::{build_graphs, to_velocity};
use trajcast::train::cv_baseline;

fn main() -> trajcast::Result<()> {
    let data_cfg = SynthConfig {
        scenes: 5,
        agents_min: 2,
        agents_max: 4,
        families: vec![MotionFamily::Turn, MotionFamily::Coupled],
        noise_sigma: 0.4,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let clips = synth_scenes(&data_cfg, &mut rng)?;

    let cfg = ModelConfig {
        channels: 16,
        num_blocks: 3,
        hidden_multiplier: 2,
        ensemble: 3,
        n_max: 4,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, 5)?;
    params.zero_readouts()?;

    let mut worst = 0.0f64;
    for clip in &clips {
        let input = to_velocity(clip)?;
        let graphs = build_graphs(clip, cfg.d_close)?;
        let model_pred = predict(&input, &graphs, &params, clip.t_future())?;
        let cv = cv_baseline(clip, 1)?;
        for (a, b) in model_pred
            .positions
            .iter()
            .flatten()
            .zip(cv.positions.iter().flatten())
        {
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    println!(
        "largest |model - baseline| coordinate over {} scenes: {worst:.3e}",
        clips.len()
    );
    assert!(worst < 1e-9);
    println!("the zero-readout ensemble is the constant-velocity baseline");
    Ok(())
}
