//! Generate a mixed synthetic scene set and write it as a clip file.
//!
//!   cargo run --example synthesize_scenes

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{synth_scenes, write_clips, MotionFamily, SynthConfig};

fn main() -> trajcast::Result<()> {
    let cfg = SynthConfig {
        scenes: 20,
        agents_min: 2,
        agents_max: 5,
        families: vec![
            MotionFamily::ConstantVelocity,
            MotionFamily::Turn,
            MotionFamily::LaneChange,
            MotionFamily::Coupled,
        ],
        noise_sigma: 0.05,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let clips = synth_scenes(&cfg, &mut rng)?;

    let agents: usize = clips.iter().map(|c| c.num_agents()).sum();
    println!(
        "generated {} scenes, {} agents total, {} history + {} future steps each",
        clips.len(),
        agents,
        cfg.t_history,
        cfg.t_future
    );
    for clip in clips.iter().take(3) {
        let speeds: Vec<f64> = clip
            .positions
            .iter()
            .map(|p| {
                let dx = p[1][0] - p[0][0];
                let dy = p[1][1] - p[0][1];
                (dx * dx + dy * dy).sqrt() * clip.frame_rate
            })
            .collect();
        println!(
            "  scene {}: {} agents, first-step speeds {:?}",
            clip.scene_id,
            clip.num_agents(),
            speeds
                .iter()
                .map(|s| (s * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }

    let out = std::env::temp_dir().join("trajcast_scenes.jsonl");
    write_clips(&out, &clips)?;
    println!("wrote {}", out.display());
    Ok(())
}
