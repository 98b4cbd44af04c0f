//! Acceptance suite. One test per criterion; each prints a PASS/FAIL line.
//!
//! Run with:
//!   cargo test --test acceptance -- --nocapture --test-threads=1

use std::panic::AssertUnwindSafe;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajcast::ingest::{
    split_train_val, synth_scenes, AgentType, MotionFamily, SceneClip, SynthConfig, Unit,
};
use trajcast::model::{
    graph_conv_forward, graph_operation, predict, BlockParams, CellType, ModelConfig, ModelParams,
};
use trajcast::preprocess::{
    build_graphs, future_velocities, normalize_adjacency, to_velocity, GraphStack, InputMode,
    GRAPH_ALPHA,
};
use trajcast::tensor::{gradcheck, BatchNormStats, Phase, Tape, Tensor};
use trajcast::train::{
    compute_metrics, cv_baseline, ensemble_loss, loss_report, predict_sample, prepare_sample,
    prepare_samples, rotate_sample, train, weighted_sum_over_classes, ScenePrediction, TrainConfig,
    TrainSample,
};

fn criterion(id: &str, body: impl FnOnce() -> String) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(details) => println!("[{id}] PASS — {details}"),
        Err(e) => {
            println!("[{id}] FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

// ── shared helpers ───────────────────────────────────────────────────────

fn synth(cfg: &SynthConfig, seed: u64) -> Vec<SceneClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_scenes(cfg, &mut rng).expect("generator config is valid")
}

fn pooled_ade(params: &ModelParams, clips: &[SceneClip]) -> f64 {
    let samples = prepare_samples(
        clips,
        params.config.input_mode,
        params.config.d_close,
        params.norm_scale,
    )
    .unwrap();
    let items: Vec<ScenePrediction> = samples
        .iter()
        .map(|s| {
            let pred = predict_sample(params, s).unwrap();
            ScenePrediction {
                pred: pred.positions,
                gt: s.gt_positions.clone(),
                mask: s.future_mask.clone(),
                agent_types: s.agent_types.clone(),
            }
        })
        .collect();
    compute_metrics(&items, 2.0, Unit::Units)
        .unwrap()
        .ade_all
        .unwrap()
}

fn cv_pooled_ade(clips: &[SceneClip]) -> f64 {
    let items: Vec<ScenePrediction> = clips
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
    compute_metrics(&items, 2.0, Unit::Units)
        .unwrap()
        .ade_all
        .unwrap()
}

// ── criterion 1: gradient integrity ──────────────────────────────────────

#[test]
fn criterion_1_gradient_integrity() {
    criterion("1/8 gradient integrity", || {
        let start = Instant::now();

        // Every differentiable op, ten seeds.
        let mut worst_op = ("", 0.0f64);
        for seed in 0..10u64 {
            for (name, err) in gradcheck::op_gradient_checks(seed).unwrap() {
                assert!(err < 1e-4, "op {name} seed {seed}: rel err {err}");
                if err > worst_op.1 {
                    worst_op = (name, err);
                }
            }
        }

        // Full model: 3 agents, t_h = 4, t_f = 3, 8 channels, r = 2,
        // trainable graphs, batch norm, residual decoding. Ten seeds for the
        // standard cell plus two for the alternative cell.
        //
        // The distance loss has a kink at zero error, so the check must run
        // at a generic point: readouts are moved off their zero
        // initialization (which would pin constant-velocity agents exactly
        // onto the kink) and the trainable graphs off zero.
        let data_cfg = SynthConfig {
            scenes: 1,
            agents_min: 3,
            agents_max: 3,
            families: vec![MotionFamily::Turn, MotionFamily::ConstantVelocity],
            t_history: 4,
            t_future: 3,
            ..SynthConfig::default()
        };
        let mut worst_model = 0.0f64;
        for seed in 0..12u64 {
            let cell = if seed < 10 {
                CellType::Gru
            } else {
                CellType::Lstm
            };
            let model_cfg = ModelConfig {
                channels: 8,
                num_blocks: 2,
                hidden_multiplier: 2,
                ensemble: 2,
                dropout: 0.0,
                cell,
                n_max: 3,
                ..ModelConfig::default()
            };
            let clips = synth(&data_cfg, 1000 + seed);
            let sample = prepare_sample(&clips[0], InputMode::Velocity, 25.0, None).unwrap();
            let params = ModelParams::init(&model_cfg, seed).unwrap();
            let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
            for (name, tensor) in params.named_tensors() {
                if name.contains("readout") || name.contains("graph_") {
                    let data = (0..tensor.numel())
                        .map(|_| jitter.gen_range(-0.1..0.1))
                        .collect();
                    tensor.set_data(data).unwrap();
                }
            }
            let inputs = params.trainable();
            let err = gradcheck::check_gradients(
                &inputs,
                move |tape| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    Ok(
                        ensemble_loss(tape, &sample, &params, Phase::Train, &mut rng)?
                            .expect("fully observed sample has a loss"),
                    )
                },
                1e-5,
            )
            .unwrap();
            assert!(
                err < 1e-4,
                "full model seed {seed} ({cell:?}): rel err {err}"
            );
            worst_model = worst_model.max(err);
        }

        let elapsed = start.elapsed().as_secs_f64();
        assert!(
            elapsed < 120.0,
            "gradient checks took {elapsed:.1}s (>120s)"
        );
        format!(
            "worst op rel err {:.2e} ({}), worst full-model rel err {worst_model:.2e}, {elapsed:.1}s",
            worst_op.1, worst_op.0
        )
    });
}

// ── criterion 2: equation oracles ────────────────────────────────────────

/// Independent transcription of the degree-normalization formula.
fn oracle_normalize(a: &[f64], n: usize, alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let deg_i: f64 = (0..n).map(|k| a[i * n + k]).sum::<f64>() + alpha;
            let deg_j: f64 = (0..n).map(|k| a[j * n + k]).sum::<f64>() + alpha;
            out[i * n + j] = a[i * n + j] / (deg_i.sqrt() * deg_j.sqrt());
        }
    }
    out
}

/// Independent transcription of the graph mixing rule: for every time slice,
/// sum over both graphs of (fixed + trainable) times the feature matrix.
#[allow(clippy::too_many_arguments)]
fn oracle_graph_operation(
    features: &[f64],
    n: usize,
    t_h: usize,
    c: usize,
    graphs: &GraphStack,
    g_self: &[f64],
    g_spatial: &[f64],
    use_trainable: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; n * t_h * c];
    for t in 0..t_h {
        for i in 0..n {
            for j in 0..n {
                for g in 0..2 {
                    let mut mix = graphs.g_fixed_per_frame[t][g][i * n + j];
                    if use_trainable {
                        mix += if g == 0 {
                            g_self[i * n + j]
                        } else {
                            g_spatial[i * n + j]
                        };
                    }
                    for ch in 0..c {
                        out[(i * t_h + t) * c + ch] += mix * features[(j * t_h + t) * c + ch];
                    }
                }
            }
        }
    }
    out
}

/// Independent transcription of the position loss: per-step mean Euclidean
/// distance over observed agents, averaged over the populated steps.
fn oracle_loss(pred: &[Vec<[f64; 2]>], gt: &[Vec<[f64; 2]>], mask: &[Vec<bool>]) -> f64 {
    let t_f = pred[0].len();
    let mut step_losses = Vec::new();
    for s in 0..t_f {
        let mut acc = 0.0;
        let mut count = 0;
        for i in 0..pred.len() {
            if mask[i][s] {
                let dx = pred[i][s][0] - gt[i][s][0];
                let dy = pred[i][s][1] - gt[i][s][1];
                acc += (dx * dx + dy * dy).sqrt();
                count += 1;
            }
        }
        if count > 0 {
            step_losses.push(acc / count as f64);
        }
    }
    if step_losses.is_empty() {
        0.0
    } else {
        step_losses.iter().sum::<f64>() / step_losses.len() as f64
    }
}

struct OracleMetrics {
    rmse_per_step: Vec<f64>,
    ade: [Option<f64>; 3],
    fde: [Option<f64>; 3],
    wsade: Option<f64>,
    wsfde: Option<f64>,
}

/// Independent transcription of RMSE / ADE / FDE and their weighted sums.
fn oracle_metrics(scene: &ScenePrediction) -> OracleMetrics {
    let t_f = scene.pred[0].len();
    let class_of = |ty: AgentType| -> Option<usize> {
        match ty {
            AgentType::SmallVehicle | AgentType::BigVehicle => Some(0),
            AgentType::Pedestrian => Some(1),
            AgentType::MotorcyclistBicyclist => Some(2),
            AgentType::Other => None,
        }
    };
    let mut rmse_per_step = Vec::new();
    for s in 0..t_f {
        let mut acc = 0.0;
        let mut count = 0;
        for i in 0..scene.pred.len() {
            if scene.mask[i][s] {
                let dx = scene.pred[i][s][0] - scene.gt[i][s][0];
                let dy = scene.pred[i][s][1] - scene.gt[i][s][1];
                acc += dx * dx + dy * dy;
                count += 1;
            }
        }
        rmse_per_step.push(if count > 0 {
            (acc / count as f64).sqrt()
        } else {
            f64::NAN
        });
    }
    let mut ade_sums = [0.0; 3];
    let mut ade_counts = [0usize; 3];
    let mut fde_sums = [0.0; 3];
    let mut fde_counts = [0usize; 3];
    for i in 0..scene.pred.len() {
        let Some(c) = class_of(scene.agent_types[i]) else {
            continue;
        };
        for s in 0..t_f {
            if scene.mask[i][s] {
                let dx = scene.pred[i][s][0] - scene.gt[i][s][0];
                let dy = scene.pred[i][s][1] - scene.gt[i][s][1];
                let d = (dx * dx + dy * dy).sqrt();
                ade_sums[c] += d;
                ade_counts[c] += 1;
                if s == t_f - 1 {
                    fde_sums[c] += d;
                    fde_counts[c] += 1;
                }
            }
        }
    }
    let mean = |sum: f64, count: usize| (count > 0).then(|| sum / count as f64);
    let ade = [
        mean(ade_sums[0], ade_counts[0]),
        mean(ade_sums[1], ade_counts[1]),
        mean(ade_sums[2], ade_counts[2]),
    ];
    let fde = [
        mean(fde_sums[0], fde_counts[0]),
        mean(fde_sums[1], fde_counts[1]),
        mean(fde_sums[2], fde_counts[2]),
    ];
    let weights = [0.20, 0.58, 0.22];
    let weighted = |vals: &[Option<f64>; 3]| {
        let present: Vec<(f64, f64)> = vals
            .iter()
            .zip(weights)
            .filter_map(|(v, w)| v.map(|v| (v, w)))
            .collect();
        (!present.is_empty()).then(|| present.iter().map(|(v, w)| v * w).sum())
    };
    OracleMetrics {
        rmse_per_step,
        wsade: weighted(&ade),
        wsfde: weighted(&fde),
        ade,
        fde,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn criterion_2_equation_oracles() {
    criterion("2/8 equation oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut instances = 0usize;

        // Adjacency normalization.
        for _ in 0..120 {
            let n = rng.gen_range(1..=5usize);
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.5) {
                        a[i * n + j] = 1.0;
                        a[j * n + i] = 1.0;
                    }
                }
            }
            let got = normalize_adjacency(&a, n, GRAPH_ALPHA);
            let want = oracle_normalize(&a, n, GRAPH_ALPHA);
            for (g, w) in got.iter().zip(&want) {
                assert!(close(*g, *w, 1e-9), "normalize: {g} vs {w}");
            }
            instances += 1;
        }

        // Graph operation.
        for k in 0..120 {
            let n = rng.gen_range(1..=4usize);
            let t_h = rng.gen_range(2..=4usize);
            let c = rng.gen_range(1..=3usize);
            let positions: Vec<Vec<[f64; 2]>> = (0..n)
                .map(|_| {
                    (0..t_h + 1)
                        .map(|_| [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)])
                        .collect()
                })
                .collect();
            let clip = SceneClip {
                scene_id: 0,
                sequence_id: 0,
                agent_ids: (1..=n as i64).collect(),
                agent_types: vec![AgentType::SmallVehicle; n],
                positions,
                mask: vec![vec![true; t_h + 1]; n],
                t_history: t_h,
                frame_rate: 2.0,
                origin_frame: 0,
                unit: Unit::Units,
            };
            let graphs = build_graphs(&clip, 15.0).unwrap();
            let feat_data: Vec<f64> = (0..n * t_h * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let features = Tensor::from_vec(&[n, t_h, c], feat_data.clone()).unwrap();
            let g_self: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let g_spatial: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let block = BlockParams {
                graph_self: Tensor::from_vec(&[n, n], g_self.clone()).unwrap(),
                graph_spatial: Tensor::from_vec(&[n, n], g_spatial.clone()).unwrap(),
                tconv_w: Tensor::zeros(&[c, c, 3]),
                tconv_b: Tensor::zeros(&[c]),
                bn_scale: Tensor::ones(&[c]),
                bn_shift: Tensor::zeros(&[c]),
                bn_stats: std::cell::RefCell::new(BatchNormStats::new(c)),
            };
            let use_trainable = k % 2 == 0;
            let tape = Tape::inactive();
            let got = graph_operation(&tape, &features, &graphs, &block, use_trainable, true)
                .unwrap()
                .value();
            let want = oracle_graph_operation(
                &feat_data,
                n,
                t_h,
                c,
                &graphs,
                &g_self,
                &g_spatial,
                use_trainable,
            );
            for (g, w) in got.iter().zip(&want) {
                assert!(close(*g, *w, 1e-9), "graph op: {g} vs {w}");
            }
            instances += 1;
        }

        // Loss and displacement metrics.
        for _ in 0..120 {
            let n = rng.gen_range(1..=5usize);
            let t_f = rng.gen_range(1..=4usize);
            let types = [
                AgentType::SmallVehicle,
                AgentType::BigVehicle,
                AgentType::Pedestrian,
                AgentType::MotorcyclistBicyclist,
                AgentType::Other,
            ];
            let scene = ScenePrediction {
                pred: (0..n)
                    .map(|_| {
                        (0..t_f)
                            .map(|_| [rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)])
                            .collect()
                    })
                    .collect(),
                gt: (0..n)
                    .map(|_| {
                        (0..t_f)
                            .map(|_| [rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)])
                            .collect()
                    })
                    .collect(),
                mask: (0..n)
                    .map(|_| (0..t_f).map(|_| rng.gen_bool(0.85)).collect())
                    .collect(),
                agent_types: (0..n)
                    .map(|_| types[rng.gen_range(0..types.len())])
                    .collect(),
            };
            let report = loss_report(&scene.pred, &scene.gt, &scene.mask).unwrap();
            let want_loss = oracle_loss(&scene.pred, &scene.gt, &scene.mask);
            assert!(close(report.total, want_loss, 1e-9));

            let metrics = compute_metrics(std::slice::from_ref(&scene), 1.0, Unit::Units).unwrap();
            let want = oracle_metrics(&scene);
            for (got, w) in metrics.rmse_per_step.iter().zip(&want.rmse_per_step) {
                if w.is_nan() {
                    assert!(got.is_nan());
                } else {
                    assert!(close(*got, *w, 1e-9), "rmse: {got} vs {w}");
                }
            }
            let pairs = [
                (metrics.ade_vehicle, want.ade[0]),
                (metrics.ade_pedestrian, want.ade[1]),
                (metrics.ade_bicycle, want.ade[2]),
                (metrics.fde_vehicle, want.fde[0]),
                (metrics.fde_pedestrian, want.fde[1]),
                (metrics.fde_bicycle, want.fde[2]),
                (metrics.wsade, want.wsade),
                (metrics.wsfde, want.wsfde),
            ];
            for (got, w) in pairs {
                match (got, w) {
                    (Some(g), Some(w)) => assert!(close(g, w, 1e-9), "{g} vs {w}"),
                    (None, None) => {}
                    other => panic!("presence mismatch: {other:?}"),
                }
            }
            instances += 1;
        }
        format!("{instances} random instances matched the transcribed formulas at 1e-9")
    });
}

// ── criterion 3: reference metric values ─────────────────────────────────

#[test]
fn criterion_3_reference_metric_values() {
    criterion("3/8 reference metric values", || {
        let (wsade, missing) = weighted_sum_over_classes(Some(2.2400), Some(0.7142), Some(1.8024));
        assert!(missing.is_empty());
        let wsade = wsade.unwrap();
        assert!(
            (wsade - 1.2588).abs() < 0.5e-4,
            "wsade {wsade} != 1.2588 at 4 decimal places"
        );
        let (wsfde, _) = weighted_sum_over_classes(Some(4.0762), Some(1.3732), Some(3.4155));
        let wsfde = wsfde.unwrap();
        assert!(
            (wsfde - 2.3631).abs() < 0.5e-4,
            "wsfde {wsfde} != 2.3631 at 4 decimal places"
        );

        // Same check end to end through scene construction: two steps whose
        // final-step errors give the reference FDEs while averaging to the
        // reference ADEs.
        let scene = |ty: AgentType, ade: f64, fde: f64| ScenePrediction {
            pred: vec![vec![[2.0 * ade - fde, 0.0], [fde, 0.0]]],
            gt: vec![vec![[0.0, 0.0], [0.0, 0.0]]],
            mask: vec![vec![true, true]],
            agent_types: vec![ty],
        };
        let scenes = vec![
            scene(AgentType::SmallVehicle, 2.2400, 4.0762),
            scene(AgentType::Pedestrian, 0.7142, 1.3732),
            scene(AgentType::MotorcyclistBicyclist, 1.8024, 3.4155),
        ];
        let report = compute_metrics(&scenes, 1.0, Unit::Meters).unwrap();
        assert!((report.wsade.unwrap() - 1.2588).abs() < 0.5e-4);
        assert!((report.wsfde.unwrap() - 2.3631).abs() < 0.5e-4);
        format!("class ADEs (2.2400, 0.7142, 1.8024) -> WSADE {wsade:.4}; FDEs -> WSFDE {wsfde:.4}")
    });
}

// ── criterion 4: structural identity with the baseline ──────────────────

#[test]
fn criterion_4_zeroed_readout_equals_constant_velocity() {
    criterion("4/8 zeroed readout = constant-velocity baseline", || {
        let data_cfg = SynthConfig {
            scenes: 8,
            agents_min: 2,
            agents_max: 5,
            families: vec![
                MotionFamily::ConstantVelocity,
                MotionFamily::Turn,
                MotionFamily::LaneChange,
                MotionFamily::Coupled,
            ],
            noise_sigma: 0.3,
            ..SynthConfig::default()
        };
        let mut clips = synth(&data_cfg, 44);
        // Punch observation gaps into the history (keeping the mandatory
        // last-history frame).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for clip in clips.iter_mut() {
            for m in clip.mask.iter_mut() {
                for t in 0..clip.t_history - 1 {
                    if rng.gen_bool(0.15) {
                        m[t] = false;
                    }
                }
            }
        }

        let mut checked = 0usize;
        for cell in [CellType::Gru, CellType::Lstm] {
            for use_bn in [true, false] {
                let cfg = ModelConfig {
                    channels: 8,
                    num_blocks: 2,
                    hidden_multiplier: 2,
                    ensemble: 3,
                    cell,
                    use_batch_norm: use_bn,
                    residual: true,
                    n_max: 5,
                    ..ModelConfig::default()
                };
                let params = ModelParams::init(&cfg, 7).unwrap();
                params.zero_readouts().unwrap();
                for clip in &clips {
                    let input = to_velocity(clip).unwrap();
                    let graphs = build_graphs(clip, cfg.d_close).unwrap();
                    let model_pred = predict(&input, &graphs, &params, clip.t_future()).unwrap();
                    let cv = cv_baseline(clip, 1).unwrap();
                    for (a, b) in model_pred
                        .positions
                        .iter()
                        .flatten()
                        .zip(cv.positions.iter().flatten())
                    {
                        assert!(close(a[0], b[0], 1e-9) && close(a[1], b[1], 1e-9));
                    }
                    for (a, b) in model_pred
                        .velocities
                        .iter()
                        .flatten()
                        .zip(cv.velocities.iter().flatten())
                    {
                        assert!(close(a[0], b[0], 1e-9) && close(a[1], b[1], 1e-9));
                    }
                    checked += 1;
                }
            }
        }
        format!("{checked} clip/config combinations agree to 1e-9")
    });
}

// ── criterion 5: desk-scale learning ─────────────────────────────────────

#[test]
fn criterion_5_desk_scale_learning() {
    criterion("5/8 desk-scale learning", || {
        // (a) Memorize 50 constant-velocity clips with 10 agents each.
        let start = Instant::now();
        let overfit_cfg = SynthConfig {
            scenes: 50,
            agents_min: 10,
            agents_max: 10,
            families: vec![MotionFamily::ConstantVelocity],
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let clips = synth(&overfit_cfg, 5);
        let model_cfg = ModelConfig {
            channels: 16,
            num_blocks: 2,
            hidden_multiplier: 2,
            ensemble: 1,
            dropout: 0.0,
            n_max: 10,
            ..ModelConfig::default()
        };
        let tcfg = TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            augment_rotation: false,
            seed: 0,
            cv_window: 1,
        };
        let mut params = ModelParams::init(&model_cfg, 0).unwrap();
        let outcome = train(&mut params, &clips, &[], &tcfg).unwrap();
        let overfit_ade = pooled_ade(&params, &clips);
        let overfit_secs = start.elapsed().as_secs_f64();
        assert!(
            overfit_ade < 0.05,
            "train-set ADE {overfit_ade} after {} epochs",
            outcome.history.len()
        );
        assert!(overfit_secs < 600.0, "memorization took {overfit_secs:.0}s");

        // (b) Mixed motion families: the trained model must beat the
        // constant-velocity baseline by at least 20% on held-out scenes.
        let start = Instant::now();
        let mixed_cfg = SynthConfig {
            scenes: 300,
            agents_min: 2,
            agents_max: 3,
            families: vec![
                MotionFamily::Turn,
                MotionFamily::LaneChange,
                MotionFamily::Coupled,
            ],
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let all = synth(&mixed_cfg, 50);
        let mut split_rng = ChaCha8Rng::seed_from_u64(51);
        let (train_set, val_set) = split_train_val(all, 0.2, &mut split_rng).unwrap();
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
        let tcfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 3e-3,
            augment_rotation: true,
            seed: 1,
            cv_window: 1,
        };
        let mut params = ModelParams::init(&model_cfg, 1).unwrap();
        let outcome = train(&mut params, &train_set, &val_set, &tcfg).unwrap();
        let model_ade = pooled_ade(&outcome.best_params, &val_set);
        let cv_ade = cv_pooled_ade(&val_set);
        let mixed_secs = start.elapsed().as_secs_f64();
        assert!(
            model_ade <= 0.8 * cv_ade,
            "validation ADE {model_ade:.4} vs CV {cv_ade:.4} (ratio {:.3})",
            model_ade / cv_ade
        );
        format!(
            "memorization ADE {overfit_ade:.4} in {overfit_secs:.0}s; mixed-set ADE {model_ade:.4} vs CV {cv_ade:.4} (ratio {:.3}) in {mixed_secs:.0}s",
            model_ade / cv_ade
        )
    });
}

// ── criterion 6: ablation directionality ─────────────────────────────────

struct ArmResult {
    ratios: Vec<f64>,
}

impl ArmResult {
    fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len() as f64
    }
}

fn run_arm(
    data: &SynthConfig,
    model: &ModelConfig,
    training: &TrainConfig,
    seeds: &[u64],
) -> ArmResult {
    let ratios = seeds
        .iter()
        .map(|&seed| {
            let all = synth(data, 100 + seed);
            let mut split_rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (train_set, val_set) = split_train_val(all, 0.2, &mut split_rng).unwrap();
            let n_max = train_set
                .iter()
                .chain(&val_set)
                .map(|c| c.num_agents())
                .max()
                .unwrap();
            let model = ModelConfig {
                n_max,
                ..model.clone()
            };
            let training = TrainConfig {
                seed,
                ..training.clone()
            };
            let mut params = ModelParams::init(&model, seed).unwrap();
            let outcome = train(&mut params, &train_set, &val_set, &training).unwrap();
            pooled_ade(&outcome.best_params, &val_set) / cv_pooled_ade(&val_set)
        })
        .collect();
    ArmResult { ratios }
}

#[test]
fn criterion_6_ablation_directionality() {
    criterion("6/8 ablation directionality", || {
        let seeds = [1u64, 2, 3];
        let base_model = ModelConfig {
            channels: 16,
            num_blocks: 2,
            use_batch_norm: false,
            hidden_multiplier: 4,
            ensemble: 1,
            dropout: 0.0,
            n_max: 0, // overwritten per run
            ..ModelConfig::default()
        };
        let base_training = TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 3e-3,
            augment_rotation: true,
            seed: 0,
            cv_window: 1,
        };

        // (i) Spatial threshold: on interaction-coupled scenes, seeing
        // nearby agents must beat total isolation.
        let coupled_data = SynthConfig {
            scenes: 150,
            agents_min: 4,
            agents_max: 4,
            families: vec![MotionFamily::Coupled],
            spawn_half_width: 60.0,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let with_graph = run_arm(
            &coupled_data,
            &ModelConfig {
                d_close: 25.0,
                ..base_model.clone()
            },
            &base_training,
            &seeds,
        );
        let isolated = run_arm(
            &coupled_data,
            &ModelConfig {
                d_close: 0.0,
                ..base_model.clone()
            },
            &base_training,
            &seeds,
        );
        assert!(
            with_graph.mean() < isolated.mean(),
            "d_close 25 mean {:.3} !< d_close 0 mean {:.3} ({:?} vs {:?})",
            with_graph.mean(),
            isolated.mean(),
            with_graph.ratios,
            isolated.ratios
        );

        // (ii) Velocity input beats normalized-position input.
        let mixed_data = SynthConfig {
            scenes: 150,
            agents_min: 2,
            agents_max: 3,
            families: vec![
                MotionFamily::Turn,
                MotionFamily::LaneChange,
                MotionFamily::Coupled,
            ],
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let short_training = TrainConfig {
            epochs: 60,
            augment_rotation: false,
            ..base_training.clone()
        };
        let velocity = run_arm(
            &mixed_data,
            &ModelConfig {
                input_mode: InputMode::Velocity,
                ..base_model.clone()
            },
            &short_training,
            &seeds,
        );
        let norm_position = run_arm(
            &mixed_data,
            &ModelConfig {
                input_mode: InputMode::NormalizedPosition,
                ..base_model.clone()
            },
            &short_training,
            &seeds,
        );
        assert!(
            velocity.mean() < norm_position.mean(),
            "velocity mean {:.3} !< normalized-position mean {:.3}",
            velocity.mean(),
            norm_position.mean()
        );

        // (iii) Residual decoding beats direct decoding.
        let residual = run_arm(
            &mixed_data,
            &ModelConfig {
                residual: true,
                ..base_model.clone()
            },
            &short_training,
            &seeds,
        );
        let direct = run_arm(
            &mixed_data,
            &ModelConfig {
                residual: false,
                ..base_model.clone()
            },
            &short_training,
            &seeds,
        );
        assert!(
            residual.mean() < direct.mean(),
            "residual mean {:.3} !< direct mean {:.3}",
            residual.mean(),
            direct.mean()
        );

        format!(
            "threshold 25 vs 0: {:.3} < {:.3}; velocity vs normalized position: {:.3} < {:.3}; residual vs direct: {:.3} < {:.3} (3-seed means of ADE/CV ratios)",
            with_graph.mean(),
            isolated.mean(),
            velocity.mean(),
            norm_position.mean(),
            residual.mean(),
            direct.mean()
        )
    });
}

// ── criterion 7: exact structural invariants ─────────────────────────────

#[test]
fn criterion_7_exact_structural_invariants() {
    criterion("7/8 exact structural invariants", || {
        let mut checks = 0usize;

        // Velocity <-> position round trip.
        let data_cfg = SynthConfig {
            scenes: 10,
            agents_min: 2,
            agents_max: 4,
            families: vec![
                MotionFamily::ConstantVelocity,
                MotionFamily::Turn,
                MotionFamily::LaneChange,
            ],
            noise_sigma: 0.2,
            ..SynthConfig::default()
        };
        for clip in synth(&data_cfg, 77) {
            let input = to_velocity(&clip).unwrap();
            let futures = future_velocities(&clip);
            for (i, fut) in futures.iter().enumerate() {
                if clip.mask[i].iter().any(|m| !m) {
                    continue;
                }
                let mut p = input.last_positions[i];
                for (s, v) in fut.iter().enumerate() {
                    p[0] += v[0];
                    p[1] += v[1];
                    let gt = clip.positions[i][clip.t_history + s];
                    assert!(close(p[0], gt[0], 1e-9) && close(p[1], gt[1], 1e-9));
                    checks += 1;
                }
            }
        }

        // Permutation equivariance of the fixed-only front end.
        let cfg = ModelConfig {
            channels: 8,
            num_blocks: 2,
            use_trainable_graph: false,
            use_batch_norm: false,
            dropout: 0.0,
            hidden_multiplier: 2,
            ensemble: 1,
            n_max: 4,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&cfg, 3).unwrap();
        let scene_cfg = SynthConfig {
            scenes: 4,
            agents_min: 4,
            agents_max: 4,
            families: vec![MotionFamily::Turn, MotionFamily::ConstantVelocity],
            spawn_half_width: 10.0,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for clip in synth(&scene_cfg, 31) {
            let n = clip.num_agents();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let mut permuted = clip.clone();
            permuted.agent_ids = perm.iter().map(|&i| clip.agent_ids[i]).collect();
            permuted.agent_types = perm.iter().map(|&i| clip.agent_types[i]).collect();
            permuted.positions = perm.iter().map(|&i| clip.positions[i].clone()).collect();
            permuted.mask = perm.iter().map(|&i| clip.mask[i].clone()).collect();

            let run = |c: &SceneClip| {
                let input = to_velocity(c).unwrap();
                let graphs = build_graphs(c, 25.0).unwrap();
                let tape = Tape::inactive();
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                graph_conv_forward(&tape, &input, &graphs, &params, Phase::Eval, &mut rng)
                    .unwrap()
                    .value()
            };
            let base = run(&clip);
            let perm_out = run(&permuted);
            let row = clip.t_history * cfg.channels;
            for i in 0..n {
                for k in 0..row {
                    assert!(
                        close(base[perm[i] * row + k], perm_out[i * row + k], 1e-9),
                        "permutation equivariance"
                    );
                    checks += 1;
                }
            }
        }

        // Ensemble of identical members equals any single member.
        let ens_cfg = ModelConfig {
            channels: 8,
            num_blocks: 1,
            hidden_multiplier: 2,
            ensemble: 3,
            dropout: 0.0,
            n_max: 3,
            ..ModelConfig::default()
        };
        let template = ModelParams::init(
            &ModelConfig {
                ensemble: 1,
                ..ens_cfg.clone()
            },
            11,
        )
        .unwrap();
        let params = ModelParams::init(&ens_cfg, 12).unwrap();
        // Copy the single member into all three slots (shared front end
        // already matches by re-seeding below).
        for (name, tensor) in params.named_tensors() {
            let source_name = if let Some(rest) = name
                .strip_prefix("member0.")
                .or_else(|| name.strip_prefix("member1."))
                .or_else(|| name.strip_prefix("member2."))
            {
                format!("member0.{rest}")
            } else {
                name.clone()
            };
            let source = template
                .named_tensors()
                .into_iter()
                .find(|(n, _)| *n == source_name)
                .map(|(_, t)| t.value())
                .unwrap();
            tensor.set_data(source).unwrap();
        }
        let clip = &synth(
            &SynthConfig {
                scenes: 1,
                agents_min: 3,
                agents_max: 3,
                families: vec![MotionFamily::Turn],
                ..SynthConfig::default()
            },
            3,
        )[0];
        let input = to_velocity(clip).unwrap();
        let graphs = build_graphs(clip, 25.0).unwrap();
        let ens_pred = predict(&input, &graphs, &params, clip.t_future()).unwrap();
        let members = ens_pred.per_member_velocities.as_ref().unwrap();
        for (i, agent) in ens_pred.velocities.iter().enumerate() {
            for (s, v) in agent.iter().enumerate() {
                for member in members {
                    assert!(
                        close(v[0], member[i][s][0], 1e-9) && close(v[1], member[i][s][1], 1e-9)
                    );
                    checks += 1;
                }
            }
        }

        // Rotation augmentation is an isometry on velocities and on
        // ground-truth step displacements.
        let mut rot_rng = ChaCha8Rng::seed_from_u64(13);
        for clip in synth(&data_cfg, 78) {
            let base = prepare_sample(&clip, InputMode::Velocity, 25.0, None).unwrap();
            let mut rotated = base.deep_clone();
            let theta = rot_rng.gen_range(0.0..std::f64::consts::TAU);
            rotate_sample(&mut rotated, theta).unwrap();
            let before = base.input.values.value();
            let after = rotated.input.values.value();
            for (b, a) in before.chunks_exact(2).zip(after.chunks_exact(2)) {
                let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
                let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
                assert!(close(nb, na, 1e-9));
                checks += 1;
            }
            check_gt_isometry(&base, &rotated, &mut checks);
        }

        format!("{checks} invariant checks at 1e-9")
    });
}

fn check_gt_isometry(base: &TrainSample, rotated: &TrainSample, checks: &mut usize) {
    for i in 0..base.gt_positions.len() {
        let last = base.input.last_positions[i];
        let mut prev_b = last;
        let mut prev_a = last;
        for (pb, pa) in base.gt_positions[i].iter().zip(&rotated.gt_positions[i]) {
            let db = ((pb[0] - prev_b[0]).powi(2) + (pb[1] - prev_b[1]).powi(2)).sqrt();
            let da = ((pa[0] - prev_a[0]).powi(2) + (pa[1] - prev_a[1]).powi(2)).sqrt();
            assert!(close(db, da, 1e-9));
            prev_b = *pb;
            prev_a = *pa;
            *checks += 1;
        }
    }
}

// ── criterion 8: explicit desk-scale limits (non-gating) ─────────────────

#[test]
fn criterion_8_desk_scale_limits() {
    criterion("8/8 desk-scale limits (informational)", || {
        // Full-dataset benchmark scores and absolute timing tables need the
        // complete datasets and GPU-scale training; they are out of scope
        // here by design. The stretch accuracy target would require the full
        // urban trajectory dataset, which is not bundled.
        //
        // Throughput note: the full-scale inference configuration
        // (120-agent capacity, hidden multiplier 30, ensemble 3) implies
        // roughly 3e9 f64 parameters (~26 GB), beyond this machine's memory.
        // A reduced-capacity proxy is timed instead.
        let proxy_cfg = ModelConfig {
            channels: 16,
            num_blocks: 3,
            hidden_multiplier: 2,
            ensemble: 1,
            dropout: 0.0,
            n_max: 120,
            ..ModelConfig::default()
        };
        let scene_cfg = SynthConfig {
            scenes: 1,
            agents_min: 120,
            agents_max: 120,
            families: vec![MotionFamily::ConstantVelocity, MotionFamily::Turn],
            spawn_half_width: 80.0,
            t_history: 6,
            t_future: 6,
            ..SynthConfig::default()
        };
        let clip = &synth(&scene_cfg, 8)[0];
        let params = ModelParams::init(&proxy_cfg, 0).unwrap();
        let sample = prepare_sample(clip, InputMode::Velocity, 25.0, None).unwrap();
        predict_sample(&params, &sample).unwrap(); // warm-up
        let mut times = Vec::new();
        for _ in 0..5 {
            let start = Instant::now();
            predict_sample(&params, &sample).unwrap();
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_ms = times[times.len() / 2];
        format!(
            "full-dataset scores/timings out of scope at desk scale; reduced-capacity 120-agent single-scene inference: {median_ms:.0} ms (channels 16, r 2, ensemble 1; non-gating)"
        )
    });
}
