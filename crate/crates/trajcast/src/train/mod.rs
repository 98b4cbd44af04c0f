//! Training loop, evaluation harness, baseline and ablation support.

mod ablation;
mod augment;
mod baseline;
mod loss;
mod metrics;

pub use ablation::{
    dclose_sweep_entries, location_error_profile, run_ablation, AblationEntry, AblationRow,
    LocationPoint,
};
pub use augment::{augment_rotate, rotate_sample};
pub use baseline::cv_baseline;
pub use loss::{loss_graph, loss_report, LossReport};
pub use metrics::{
    compute_metrics, weighted_sum_over_classes, HorizonRmse, MetricClass, MetricsReport,
    ScenePrediction, WEIGHT_BICYCLE, WEIGHT_PEDESTRIAN, WEIGHT_VEHICLE,
};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgentType, SceneClip, Unit};
use crate::model::{predict, rollout, ModelParams, PredictionResult};
use crate::preprocess::{
    build_graphs, max_abs_coordinate, to_normalized_position, to_velocity, InputMode, ModelInput,
};
use crate::tensor::{AdamState, Phase, Tape, Tensor};

/// A clip converted to model inputs, graphs and ground truth.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub scene_id: u64,
    pub input: ModelInput,
    pub graphs: crate::preprocess::GraphStack,
    pub gt_positions: Vec<Vec<[f64; 2]>>,
    pub future_mask: Vec<Vec<bool>>,
    pub agent_types: Vec<AgentType>,
    pub agent_ids: Vec<i64>,
    pub frame_rate: f64,
    pub unit: Unit,
}

impl TrainSample {
    pub fn t_future(&self) -> usize {
        self.gt_positions.first().map_or(0, |g| g.len())
    }

    /// Copy whose input tensor has fresh storage (plain `clone` shares it).
    pub fn deep_clone(&self) -> Self {
        TrainSample {
            input: self.input.deep_clone(),
            ..self.clone()
        }
    }
}

pub fn prepare_sample(
    clip: &SceneClip,
    mode: InputMode,
    d_close: f64,
    norm_scale: Option<f64>,
) -> Result<TrainSample> {
    clip.validate()?;
    let input = match mode {
        InputMode::Velocity => to_velocity(clip)?,
        InputMode::NormalizedPosition => {
            let scale = norm_scale
                .ok_or_else(|| Error::Parameter("normalized-position mode needs a scale".into()))?;
            to_normalized_position(clip, scale)?
        }
    };
    let graphs = build_graphs(clip, d_close)?;
    let t_h = clip.t_history;
    Ok(TrainSample {
        scene_id: clip.scene_id,
        input,
        graphs,
        gt_positions: clip.positions.iter().map(|p| p[t_h..].to_vec()).collect(),
        future_mask: clip.mask.iter().map(|m| m[t_h..].to_vec()).collect(),
        agent_types: clip.agent_types.clone(),
        agent_ids: clip.agent_ids.clone(),
        frame_rate: clip.frame_rate,
        unit: clip.unit,
    })
}

pub fn prepare_samples(
    clips: &[SceneClip],
    mode: InputMode,
    d_close: f64,
    norm_scale: Option<f64>,
) -> Result<Vec<TrainSample>> {
    clips
        .iter()
        .map(|c| prepare_sample(c, mode, d_close, norm_scale))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augment_rotation: bool,
    pub seed: u64,
    /// Trailing steps averaged by the constant-velocity baseline.
    pub cv_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            augment_rotation: true,
            seed: 0,
            cv_window: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Parameter("learning rate must be >= 0".into()));
        }
        if self.cv_window == 0 {
            return Err(Error::Parameter("cv_window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_wsade: Option<f64>,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    /// Optimizer steps executed in total.
    pub steps_taken: usize,
    pub best_epoch: Option<usize>,
    /// Snapshot of the parameters at the best validation loss (final
    /// parameters when no validation set was given).
    pub best_params: ModelParams,
}

/// Differentiable loss of one ensemble member on one sample.
fn member_clip_loss(
    tape: &Tape,
    sample: &TrainSample,
    params: &ModelParams,
    member: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Tensor>> {
    let cfg = &params.config;
    let t_f = sample.t_future();
    let rollouts = rollout(
        tape,
        &sample.input,
        &sample.graphs,
        params,
        &[member],
        t_f,
        phase,
        rng,
    )?;
    let steps = &rollouts[0];
    let n = sample.input.num_agents();
    let width = cfg.decoder_width();

    let mut positions = Vec::with_capacity(t_f);
    match cfg.input_mode {
        InputMode::Velocity => {
            let mut flat = vec![0.0; width];
            for (i, p) in sample.input.last_positions.iter().enumerate() {
                flat[2 * i] = p[0];
                flat[2 * i + 1] = p[1];
            }
            let mut prev = Tensor::from_vec(&[1, width], flat)?;
            for step in steps {
                let pos = tape.add(&prev, step)?;
                positions.push(pos.clone());
                prev = pos;
            }
        }
        InputMode::NormalizedPosition => {
            let scale = sample
                .input
                .norm_scale
                .ok_or_else(|| Error::Usage("missing normalization scale".into()))?;
            for step in steps {
                positions.push(tape.scale(step, scale)?);
            }
        }
    }

    let mut gt_flat = Vec::with_capacity(t_f);
    let mut weights = Vec::with_capacity(t_f);
    for s in 0..t_f {
        let mut g = vec![0.0; width];
        let mut w = vec![0.0; cfg.n_max];
        let count = (0..n).filter(|i| sample.future_mask[*i][s]).count();
        for i in 0..n {
            g[2 * i] = sample.gt_positions[i][s][0];
            g[2 * i + 1] = sample.gt_positions[i][s][1];
            if sample.future_mask[i][s] && count > 0 {
                w[i] = 1.0 / count as f64;
            }
        }
        gt_flat.push(g);
        weights.push(w);
    }
    loss_graph(tape, &positions, &gt_flat, &weights)
}

/// Ensemble prediction for a prepared sample.
pub fn predict_sample(params: &ModelParams, sample: &TrainSample) -> Result<PredictionResult> {
    predict(&sample.input, &sample.graphs, params, sample.t_future())
}

/// Differentiable training objective of one sample: the mean over all
/// ensemble members of the per-member position loss. `None` when every
/// future step is fully masked.
pub fn ensemble_loss(
    tape: &Tape,
    sample: &TrainSample,
    params: &ModelParams,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Tensor>> {
    let mut acc: Option<Tensor> = None;
    let mut count = 0usize;
    for member in 0..params.config.ensemble {
        if let Some(loss) = member_clip_loss(tape, sample, params, member, phase, rng)? {
            acc = Some(match acc {
                None => loss,
                Some(prev) => tape.add(&prev, &loss)?,
            });
            count += 1;
        }
    }
    match acc {
        None => Ok(None),
        Some(total) => Ok(Some(tape.scale(&total, 1.0 / count as f64)?)),
    }
}

/// Mean position loss and full metrics of the ensemble over a sample set.
pub fn evaluate(
    params: &ModelParams,
    samples: &[TrainSample],
) -> Result<(Option<f64>, MetricsReport)> {
    let mut losses = Vec::with_capacity(samples.len());
    let mut items = Vec::with_capacity(samples.len());
    for sample in samples {
        let pred = predict_sample(params, sample)?;
        let report = loss_report(&pred.positions, &sample.gt_positions, &sample.future_mask)?;
        losses.push(report.total);
        items.push(ScenePrediction {
            pred: pred.positions,
            gt: sample.gt_positions.clone(),
            mask: sample.future_mask.clone(),
            agent_types: sample.agent_types.clone(),
        });
    }
    let loss = if losses.is_empty() {
        None
    } else {
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    };
    let (frame_rate, unit) = samples
        .first()
        .map_or((1.0, Unit::Units), |s| (s.frame_rate, s.unit));
    let metrics = compute_metrics(&items, frame_rate, unit)?;
    Ok((loss, metrics))
}

/// Mini-batch Adam over the ensemble.
///
/// Each member draws its batches from its own shuffled stream of the
/// training set (distinct shuffle seeds), so members decorrelate through
/// both initialization and data order while sharing the graph-convolution
/// front end. One optimizer step consumes one batch per member.
pub fn train(
    params: &mut ModelParams,
    train_clips: &[SceneClip],
    val_clips: &[SceneClip],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_clips.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    let mode = params.config.input_mode;
    if mode == InputMode::NormalizedPosition && params.norm_scale.is_none() {
        let scale = max_abs_coordinate(train_clips);
        if !(scale > 0.0) {
            return Err(Error::Data(
                "cannot derive a position scale from the training set".into(),
            ));
        }
        params.norm_scale = Some(scale);
    }
    for clip in train_clips {
        if clip.num_agents() > params.config.n_max {
            return Err(Error::Capacity {
                n: clip.num_agents(),
                n_max: params.config.n_max,
            });
        }
    }
    let d_close = params.config.d_close;
    let samples = prepare_samples(train_clips, mode, d_close, params.norm_scale)?;
    let val_samples = prepare_samples(val_clips, mode, d_close, params.norm_scale)?;

    let tensors = params.trainable();
    let mut adam = AdamState::new(&tensors, cfg.learning_rate);
    let mut master_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ensemble = params.config.ensemble;
    let mut shuffle_rngs: Vec<ChaCha8Rng> = (0..ensemble)
        .map(|_| ChaCha8Rng::seed_from_u64(master_rng.gen()))
        .collect();

    let n = samples.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut steps_taken = 0usize;
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let orders: Vec<Vec<usize>> = shuffle_rngs
            .iter_mut()
            .map(|rng| {
                let mut order: Vec<usize> = (0..n).collect();
                use rand::seq::SliceRandom;
                order.shuffle(rng);
                order
            })
            .collect();

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for step in 0..steps_per_epoch {
            params.zero_grad();
            let lo = step * cfg.batch_size;
            let hi = (lo + cfg.batch_size).min(n);
            for (member, order) in orders.iter().enumerate() {
                let batch = &order[lo..hi];
                let weight = 1.0 / (ensemble * batch.len()) as f64;
                for &idx in batch {
                    let storage;
                    let sample: &TrainSample =
                        if cfg.augment_rotation && mode == InputMode::Velocity {
                            let mut rotated = samples[idx].deep_clone();
                            augment_rotate(&mut rotated, &mut master_rng)?;
                            storage = rotated;
                            &storage
                        } else {
                            &samples[idx]
                        };
                    let tape = Tape::new();
                    if let Some(loss) = member_clip_loss(
                        &tape,
                        sample,
                        params,
                        member,
                        Phase::Train,
                        &mut master_rng,
                    )? {
                        let value = loss.item();
                        if !value.is_finite() {
                            return Err(Error::Divergence { epoch, batch: step });
                        }
                        loss_sum += value;
                        loss_count += 1;
                        let scaled = tape.scale(&loss, weight)?;
                        tape.backward(&scaled)?;
                    }
                }
            }
            adam.update(&tensors)?;
            steps_taken += 1;
        }

        let train_loss = if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            0.0
        };
        let (val_loss, val_wsade) = if val_samples.is_empty() {
            (None, None)
        } else {
            let (loss, metrics) = evaluate(params, &val_samples)?;
            (loss, metrics.wsade)
        };

        // Best-checkpoint tracking follows the post-epoch validation loss;
        // without a validation set the final parameters are retained.
        if let Some(tracked) = val_loss {
            let improved = best.as_ref().map_or(true, |(b, _, _)| tracked < *b);
            if improved {
                best = Some((tracked, epoch, params.deep_clone()));
            }
        }

        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_wsade,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let (best_epoch, best_params) = match best {
        Some((_, epoch, snapshot)) => (Some(epoch), snapshot),
        None => (None, params.deep_clone()),
    };
    Ok(TrainOutcome {
        history,
        steps_taken,
        best_epoch,
        best_params,
    })
}
