//! Configuration-grid harness: train and score a list of model/training
//! variants, sweep the spatial threshold, and break prediction error down
//! by scene location.

use serde::Serialize;

use super::{evaluate, predict_sample, prepare_samples, train, TrainConfig, TrainSample};
use crate::error::Result;
use crate::ingest::SceneClip;
use crate::model::{ModelConfig, ModelParams};
use crate::preprocess::InputMode;

#[derive(Clone, Debug)]
pub struct AblationEntry {
    pub label: String,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

/// One scored grid row; mirrors the configuration-axes table layout.
#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub batch_norm: bool,
    pub input: String,
    pub cell: String,
    pub blocks: usize,
    pub residual: bool,
    pub graph: String,
    pub ensemble: usize,
    pub r: usize,
    pub augment: bool,
    pub d_close: f64,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_ade: Option<f64>,
    pub val_fde: Option<f64>,
    pub val_wsade: Option<f64>,
    pub error: Option<String>,
}

fn describe(entry: &AblationEntry) -> AblationRow {
    AblationRow {
        label: entry.label.clone(),
        batch_norm: entry.model.use_batch_norm,
        input: match entry.model.input_mode {
            InputMode::Velocity => "velocity".into(),
            InputMode::NormalizedPosition => "norm".into(),
        },
        cell: format!("{:?}", entry.model.cell).to_lowercase(),
        blocks: entry.model.num_blocks,
        residual: entry.model.residual,
        graph: if entry.model.use_trainable_graph {
            "fixed+train".into()
        } else {
            "fixed_only".into()
        },
        ensemble: entry.model.ensemble,
        r: entry.model.hidden_multiplier,
        augment: entry.training.augment_rotation,
        d_close: entry.model.d_close,
        train_loss: None,
        val_loss: None,
        val_ade: None,
        val_fde: None,
        val_wsade: None,
        error: None,
    }
}

/// Train and score every entry. Individual failures are recorded in the
/// row's `error` column and the grid continues.
pub fn run_ablation(
    entries: &[AblationEntry],
    train_clips: &[SceneClip],
    val_clips: &[SceneClip],
) -> Vec<AblationRow> {
    entries
        .iter()
        .map(|entry| {
            let mut row = describe(entry);
            match run_entry(entry, train_clips, val_clips) {
                Ok((train_loss, val_loss, ade, fde, wsade)) => {
                    row.train_loss = train_loss;
                    row.val_loss = val_loss;
                    row.val_ade = ade;
                    row.val_fde = fde;
                    row.val_wsade = wsade;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

type EntryScore = (
    Option<f64>,
    Option<f64>,
    Option<f64>,
    Option<f64>,
    Option<f64>,
);

fn run_entry(
    entry: &AblationEntry,
    train_clips: &[SceneClip],
    val_clips: &[SceneClip],
) -> Result<EntryScore> {
    let mut params = ModelParams::init(&entry.model, entry.training.seed)?;
    let outcome = train(&mut params, train_clips, val_clips, &entry.training)?;
    let train_loss = outcome.history.last().map(|h| h.train_loss);
    let eval_clips = if val_clips.is_empty() {
        train_clips
    } else {
        val_clips
    };
    let samples = prepare_samples(
        eval_clips,
        entry.model.input_mode,
        entry.model.d_close,
        outcome.best_params.norm_scale,
    )?;
    let (val_loss, metrics) = evaluate(&outcome.best_params, &samples)?;
    Ok((
        train_loss,
        val_loss,
        metrics.ade_all,
        metrics.fde_all,
        metrics.wsade,
    ))
}

/// Grid entries that differ from `base` only in the spatial threshold.
pub fn dclose_sweep_entries(
    base_model: &ModelConfig,
    base_training: &TrainConfig,
    values: &[f64],
) -> Vec<AblationEntry> {
    values
        .iter()
        .map(|&d| AblationEntry {
            label: format!("dclose={d}"),
            model: ModelConfig {
                d_close: d,
                ..base_model.clone()
            },
            training: base_training.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LocationPoint {
    pub bin_center: f64,
    pub step: usize,
    pub mean_error: f64,
    pub count: usize,
}

/// Mean prediction error bucketed by each agent's last-history coordinate
/// along the scene's dominant direction of travel (the mean last observed
/// velocity), relative to the scene centroid.
pub fn location_error_profile(
    params: &ModelParams,
    samples: &[TrainSample],
    num_bins: usize,
    half_width: f64,
) -> Result<Vec<LocationPoint>> {
    let t_f = samples.iter().map(|s| s.t_future()).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; t_f]; num_bins];
    let mut counts = vec![vec![0usize; t_f]; num_bins];

    for sample in samples {
        let pred = predict_sample(params, sample)?;
        let n = sample.input.num_agents();
        let last_vals = sample.input.last_step_values();
        let mut dir = [0.0, 0.0];
        for v in &last_vals {
            dir[0] += v[0];
            dir[1] += v[1];
        }
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let dir = if norm > 1e-9 {
            [dir[0] / norm, dir[1] / norm]
        } else {
            [1.0, 0.0]
        };
        let mut centroid = [0.0, 0.0];
        for p in &sample.input.last_positions {
            centroid[0] += p[0];
            centroid[1] += p[1];
        }
        centroid[0] /= n as f64;
        centroid[1] /= n as f64;

        for i in 0..n {
            let p = sample.input.last_positions[i];
            let u = (p[0] - centroid[0]) * dir[0] + (p[1] - centroid[1]) * dir[1];
            let rel = ((u + half_width) / (2.0 * half_width)).clamp(0.0, 1.0);
            let bin = ((rel * num_bins as f64) as usize).min(num_bins - 1);
            for s in 0..sample.t_future() {
                if sample.future_mask[i][s] {
                    let dx = pred.positions[i][s][0] - sample.gt_positions[i][s][0];
                    let dy = pred.positions[i][s][1] - sample.gt_positions[i][s][1];
                    sums[bin][s] += (dx * dx + dy * dy).sqrt();
                    counts[bin][s] += 1;
                }
            }
        }
    }

    let mut out = Vec::new();
    for (b, (sum_row, count_row)) in sums.iter().zip(&counts).enumerate() {
        let center = -half_width + (b as f64 + 0.5) * (2.0 * half_width) / num_bins as f64;
        for (s, (&sum, &count)) in sum_row.iter().zip(count_row).enumerate() {
            if count > 0 {
                out.push(LocationPoint {
                    bin_center: center,
                    step: s + 1,
                    mean_error: sum / count as f64,
                    count,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_scenes, MotionFamily, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clips() -> Vec<SceneClip> {
        let cfg = SynthConfig {
            scenes: 6,
            agents_min: 2,
            agents_max: 3,
            families: vec![MotionFamily::ConstantVelocity],
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        synth_scenes(&cfg, &mut rng).unwrap()
    }

    fn quick_entry(label: &str, d_close: f64) -> AblationEntry {
        AblationEntry {
            label: label.into(),
            model: ModelConfig {
                channels: 4,
                num_blocks: 1,
                hidden_multiplier: 1,
                ensemble: 1,
                dropout: 0.0,
                d_close,
                ..ModelConfig::tiny(3)
            },
            training: TrainConfig {
                epochs: 1,
                batch_size: 8,
                augment_rotation: false,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        let rows = run_ablation(&[], &clips(), &[]);
        assert!(rows.is_empty());
    }

    #[test]
    fn grid_rows_carry_their_configuration() {
        let all = clips();
        let (train_set, val_set) = all.split_at(4);
        let entries = vec![quick_entry("a", 0.0), quick_entry("b", 25.0)];
        let rows = run_ablation(&entries, train_set, val_set);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].d_close, 0.0);
        assert_eq!(rows[1].d_close, 25.0);
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert!(rows.iter().all(|r| r.val_ade.is_some()));
    }

    #[test]
    fn failing_entry_is_recorded_and_the_grid_continues() {
        let mut bad = quick_entry("bad", 25.0);
        bad.model.n_max = 1; // capacity below the data's agent counts
        let entries = vec![bad, quick_entry("good", 25.0)];
        let rows = run_ablation(&entries, &clips(), &[]);
        assert!(rows[0].error.is_some());
        assert!(rows[1].error.is_none());
    }

    #[test]
    fn sweep_entries_vary_only_the_threshold() {
        let base = quick_entry("base", 25.0);
        let entries = dclose_sweep_entries(&base.model, &base.training, &[0.0, 25.0, 50.0]);
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].model.d_close, 0.0);
        assert_eq!(entries[2].model.d_close, 50.0);
        assert_eq!(entries[0].model.channels, base.model.channels);
    }

    #[test]
    fn location_profile_covers_populated_bins() {
        let all = clips();
        let params = ModelParams::init(&quick_entry("p", 25.0).model, 0).unwrap();
        let samples = prepare_samples(&all, InputMode::Velocity, 25.0, None).unwrap();
        let points = location_error_profile(&params, &samples, 6, 90.0).unwrap();
        assert!(!points.is_empty());
        assert!(points.iter().all(|p| p.count > 0));
        assert!(points.iter().all(|p| p.mean_error.is_finite()));
    }
}
