//! Rotation augmentation on velocity-space training samples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TrainSample;
use crate::error::{Error, Result};
use crate::preprocess::InputMode;

fn rotate(p: [f64; 2], cos: f64, sin: f64) -> [f64; 2] {
    [p[0] * cos - p[1] * sin, p[0] * sin + p[1] * cos]
}

/// Rotate a sample by `theta`: every input velocity vector and every
/// ground-truth future displacement turn together. Future positions pivot
/// around each agent's own last observed position, so the telescoped
/// ground-truth displacements are exactly the rotated originals. Distances
/// are preserved, so the precomputed graphs stay valid.
pub fn rotate_sample(sample: &mut TrainSample, theta: f64) -> Result<()> {
    if sample.input.mode != InputMode::Velocity {
        return Err(Error::Usage(
            "rotation augmentation applies to velocity-mode inputs".into(),
        ));
    }
    let (sin, cos) = theta.sin_cos();
    let mut values = sample.input.values.value();
    for pair in values.chunks_exact_mut(2) {
        let r = rotate([pair[0], pair[1]], cos, sin);
        pair[0] = r[0];
        pair[1] = r[1];
    }
    sample.input.values.set_data(values)?;

    for (agent, last) in sample
        .gt_positions
        .iter_mut()
        .zip(&sample.input.last_positions)
    {
        for p in agent.iter_mut() {
            let rel = [p[0] - last[0], p[1] - last[1]];
            let r = rotate(rel, cos, sin);
            p[0] = last[0] + r[0];
            p[1] = last[1] + r[1];
        }
    }
    Ok(())
}

/// Apply one uniformly random rotation to the whole sample.
pub fn augment_rotate(sample: &mut TrainSample, rng: &mut ChaCha8Rng) -> Result<()> {
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    rotate_sample(sample, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_scenes, SynthConfig};
    use crate::train::prepare_sample;
    use rand::SeedableRng;

    fn sample() -> TrainSample {
        let cfg = SynthConfig {
            scenes: 1,
            agents_min: 3,
            agents_max: 3,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clips = synth_scenes(&cfg, &mut rng).unwrap();
        prepare_sample(&clips[0], InputMode::Velocity, 25.0, None).unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let mut s = sample();
        let before_values = s.input.values.value();
        let before_gt = s.gt_positions.clone();
        rotate_sample(&mut s, 0.0).unwrap();
        for (a, b) in s.input.values.value().iter().zip(&before_values) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s
            .gt_positions
            .iter()
            .flatten()
            .zip(before_gt.iter().flatten())
        {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn half_turn_negates_every_velocity() {
        let mut s = sample();
        let before = s.input.values.value();
        rotate_sample(&mut s, std::f64::consts::PI).unwrap();
        for (a, b) in s.input.values.value().iter().zip(&before) {
            assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn speeds_are_preserved_under_any_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..8 {
            let mut s = sample();
            let before = s.input.values.value();
            let gt_before = s.gt_positions.clone();
            augment_rotate(&mut s, &mut rng).unwrap();
            let after = s.input.values.value();
            for (b, a) in before.chunks_exact(2).zip(after.chunks_exact(2)) {
                let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
                let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
                assert!((nb - na).abs() < 1e-9);
            }
            // Ground-truth step displacements keep their lengths too.
            for (i, (bef, aft)) in gt_before.iter().zip(&s.gt_positions).enumerate() {
                let last = s.input.last_positions[i];
                let mut prev_b = last;
                let mut prev_a = last;
                for (pb, pa) in bef.iter().zip(aft) {
                    let db = ((pb[0] - prev_b[0]).powi(2) + (pb[1] - prev_b[1]).powi(2)).sqrt();
                    let da = ((pa[0] - prev_a[0]).powi(2) + (pa[1] - prev_a[1]).powi(2)).sqrt();
                    assert!((db - da).abs() < 1e-9);
                    prev_b = *pb;
                    prev_a = *pa;
                }
            }
        }
    }

    #[test]
    fn normalized_position_mode_is_rejected() {
        let cfg = SynthConfig {
            scenes: 1,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clips = synth_scenes(&cfg, &mut rng).unwrap();
        let mut s =
            prepare_sample(&clips[0], InputMode::NormalizedPosition, 25.0, Some(50.0)).unwrap();
        assert!(rotate_sample(&mut s, 1.0).is_err());
    }
}
