//! Trainable state of one model instance, with deterministic naming for
//! checkpoints and the optimizer.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CellType, ModelConfig};
use crate::error::Result;
use crate::tensor::{BatchNormStats, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// One graph-operation + temporal-convolution block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    /// Trainable correction added to the normalized self graph.
    pub graph_self: Tensor,
    /// Trainable correction added to the normalized spatial graph.
    pub graph_spatial: Tensor,
    pub tconv_w: Tensor,
    pub tconv_b: Tensor,
    pub bn_scale: Tensor,
    pub bn_shift: Tensor,
    pub bn_stats: RefCell<BatchNormStats>,
}

/// Gate weights of one recurrent layer. Indexed by gate: GRU uses
/// (reset, update, candidate); LSTM uses (input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub w_input: Vec<Tensor>,
    pub w_hidden: Vec<Tensor>,
    pub b_input: Vec<Tensor>,
    pub b_hidden: Vec<Tensor>,
}

/// One ensemble member: encoder + decoder stacks and the output projection.
#[derive(Clone, Debug)]
pub struct MemberParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
    pub readout_w: Tensor,
    pub readout_b: Tensor,
}

/// All trainable tensors plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub lift_w: Tensor,
    pub lift_b: Tensor,
    pub blocks: Vec<BlockParams>,
    pub members: Vec<MemberParams>,
    /// Position scale for normalized-position input mode, captured from the
    /// training set.
    pub norm_scale: Option<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::param(shape, data).expect("consistent by construction")
}

fn zero_param(shape: &[usize]) -> Tensor {
    let t = Tensor::zeros(shape);
    t.set_requires_grad(true);
    t
}

fn ones_param(shape: &[usize]) -> Tensor {
    let t = Tensor::ones(shape);
    t.set_requires_grad(true);
    t
}

fn init_layer(rng: &mut ChaCha8Rng, cell: CellType, input: usize, hidden: usize) -> LayerParams {
    let gates = cell.num_gates();
    LayerParams {
        w_input: (0..gates)
            .map(|_| xavier(rng, &[input, hidden], input, hidden))
            .collect(),
        w_hidden: (0..gates)
            .map(|_| xavier(rng, &[hidden, hidden], hidden, hidden))
            .collect(),
        b_input: (0..gates).map(|_| zero_param(&[1, hidden])).collect(),
        b_hidden: (0..gates).map(|_| zero_param(&[1, hidden])).collect(),
    }
}

fn init_member(rng: &mut ChaCha8Rng, config: &ModelConfig) -> MemberParams {
    let hidden = config.hidden_size();
    let enc_in = config.encoder_input_size();
    let dec_in = config.decoder_width();
    let encoder = (0..config.num_layers)
        .map(|l| {
            let input = if l == 0 { enc_in } else { hidden };
            init_layer(rng, config.cell, input, hidden)
        })
        .collect();
    let decoder = (0..config.num_layers)
        .map(|l| {
            let input = if l == 0 { dec_in } else { hidden };
            init_layer(rng, config.cell, input, hidden)
        })
        .collect();
    MemberParams {
        encoder,
        decoder,
        // Zero-initialized readout: with residual decoding the untrained
        // model starts exactly at constant-velocity extrapolation.
        readout_w: zero_param(&[hidden, dec_in]),
        readout_b: zero_param(&[1, dec_in]),
    }
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        let lift_w = xavier(&mut rng, &[c, 2], 2, c);
        let lift_b = zero_param(&[c]);
        let blocks = (0..config.num_blocks)
            .map(|_| BlockParams {
                // Zero-initialized corrections: training starts at the pure
                // fixed-graph model and learns adjustments.
                graph_self: zero_param(&[config.n_max, config.n_max]),
                graph_spatial: zero_param(&[config.n_max, config.n_max]),
                tconv_w: xavier(&mut rng, &[c, c, 3], c * 3, c),
                tconv_b: zero_param(&[c]),
                bn_scale: ones_param(&[c]),
                bn_shift: zero_param(&[c]),
                bn_stats: RefCell::new(BatchNormStats::new(c)),
            })
            .collect();
        // Each member draws from its own stream so ensembles differ only by
        // initialization seed.
        let members = (0..config.ensemble)
            .map(|_| {
                let member_seed = rng.gen::<u64>();
                let mut member_rng = ChaCha8Rng::seed_from_u64(member_seed);
                init_member(&mut member_rng, config)
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            lift_w,
            lift_b,
            blocks,
            members,
            norm_scale: None,
        })
    }

    fn layer_entries(out: &mut Vec<(String, Tensor)>, prefix: &str, layer: &LayerParams) {
        for (g, t) in layer.w_input.iter().enumerate() {
            out.push((format!("{prefix}.w_input{g}"), t.clone()));
        }
        for (g, t) in layer.w_hidden.iter().enumerate() {
            out.push((format!("{prefix}.w_hidden{g}"), t.clone()));
        }
        for (g, t) in layer.b_input.iter().enumerate() {
            out.push((format!("{prefix}.b_input{g}"), t.clone()));
        }
        for (g, t) in layer.b_hidden.iter().enumerate() {
            out.push((format!("{prefix}.b_hidden{g}"), t.clone()));
        }
    }

    /// Every trainable tensor with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("lift.w".to_string(), self.lift_w.clone()),
            ("lift.b".to_string(), self.lift_b.clone()),
        ];
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.graph_self"), block.graph_self.clone()));
            out.push((
                format!("block{b}.graph_spatial"),
                block.graph_spatial.clone(),
            ));
            out.push((format!("block{b}.tconv_w"), block.tconv_w.clone()));
            out.push((format!("block{b}.tconv_b"), block.tconv_b.clone()));
            out.push((format!("block{b}.bn_scale"), block.bn_scale.clone()));
            out.push((format!("block{b}.bn_shift"), block.bn_shift.clone()));
        }
        for (m, member) in self.members.iter().enumerate() {
            for (l, layer) in member.encoder.iter().enumerate() {
                Self::layer_entries(&mut out, &format!("member{m}.encoder{l}"), layer);
            }
            for (l, layer) in member.decoder.iter().enumerate() {
                Self::layer_entries(&mut out, &format!("member{m}.decoder{l}"), layer);
            }
            out.push((format!("member{m}.readout_w"), member.readout_w.clone()));
            out.push((format!("member{m}.readout_b"), member.readout_b.clone()));
        }
        out
    }

    /// Non-trainable buffers (batch-norm running statistics).
    pub fn named_buffers(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let stats = block.bn_stats.borrow();
            out.push((format!("block{b}.bn_running_mean"), stats.mean.clone()));
            out.push((format!("block{b}.bn_running_var"), stats.var.clone()));
        }
        out
    }

    pub fn set_buffer(&self, name: &str, data: Vec<f64>) -> bool {
        for (b, block) in self.blocks.iter().enumerate() {
            if name == format!("block{b}.bn_running_mean") {
                block.bn_stats.borrow_mut().mean = data;
                return true;
            }
            if name == format!("block{b}.bn_running_var") {
                block.bn_stats.borrow_mut().var = data;
                return true;
            }
        }
        false
    }

    pub fn trainable(&self) -> Vec<Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn zero_grad(&self) {
        for t in self.trainable() {
            t.zero_grad();
        }
    }

    /// Independent copy (fresh storage for all tensors and stats).
    pub fn deep_clone(&self) -> Self {
        let clone_tensor = |t: &Tensor| {
            let c = Tensor::from_vec(&t.shape(), t.value()).expect("same shape");
            c.set_requires_grad(t.requires_grad());
            c
        };
        let clone_layer = |l: &LayerParams| LayerParams {
            w_input: l.w_input.iter().map(&clone_tensor).collect(),
            w_hidden: l.w_hidden.iter().map(&clone_tensor).collect(),
            b_input: l.b_input.iter().map(&clone_tensor).collect(),
            b_hidden: l.b_hidden.iter().map(&clone_tensor).collect(),
        };
        ModelParams {
            config: self.config.clone(),
            lift_w: clone_tensor(&self.lift_w),
            lift_b: clone_tensor(&self.lift_b),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    graph_self: clone_tensor(&b.graph_self),
                    graph_spatial: clone_tensor(&b.graph_spatial),
                    tconv_w: clone_tensor(&b.tconv_w),
                    tconv_b: clone_tensor(&b.tconv_b),
                    bn_scale: clone_tensor(&b.bn_scale),
                    bn_shift: clone_tensor(&b.bn_shift),
                    bn_stats: RefCell::new(b.bn_stats.borrow().clone()),
                })
                .collect(),
            members: self
                .members
                .iter()
                .map(|m| MemberParams {
                    encoder: m.encoder.iter().map(&clone_layer).collect(),
                    decoder: m.decoder.iter().map(&clone_layer).collect(),
                    readout_w: clone_tensor(&m.readout_w),
                    readout_b: clone_tensor(&m.readout_b),
                })
                .collect(),
            norm_scale: self.norm_scale,
        }
    }

    /// Copy every tensor and buffer value from `other` (same architecture).
    pub fn copy_from(&self, other: &ModelParams) -> Result<()> {
        for ((_, dst), (_, src)) in self.named_tensors().iter().zip(other.named_tensors()) {
            dst.set_data(src.value())?;
        }
        for (name, data) in other.named_buffers() {
            self.set_buffer(&name, data);
        }
        Ok(())
    }

    /// Zero the decoder output projections of every member. With residual
    /// decoding this turns the model into exact constant-velocity rollout.
    pub fn zero_readouts(&self) -> Result<()> {
        for member in &self.members {
            member
                .readout_w
                .set_data(vec![0.0; member.readout_w.numel()])?;
            member
                .readout_b
                .set_data(vec![0.0; member.readout_b.numel()])?;
        }
        Ok(())
    }
}
