//! Graph-convolutional front end: channel lift, then blocks of graph
//! operation -> temporal convolution -> batch norm -> relu -> dropout with
//! identity skip connections.

use rand_chacha::ChaCha8Rng;

use super::{BlockParams, ModelParams, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::preprocess::{GraphStack, ModelInput};
use crate::tensor::{Phase, Tape, Tensor};

/// Lift 2-channel coordinates to the working channel width.
pub fn channel_lift(tape: &Tape, input: &ModelInput, params: &ModelParams) -> Result<Tensor> {
    tape.conv_channel_mix(&input.values, &params.lift_w, &params.lift_b)
}

/// Mix agent features through the per-frame graphs:
/// for each time slice, multiply by the sum of the normalized fixed graphs
/// and (optionally) their trainable corrections.
pub fn graph_operation(
    tape: &Tape,
    features: &Tensor,
    graphs: &GraphStack,
    block: &BlockParams,
    use_trainable: bool,
    train_self_graph: bool,
) -> Result<Tensor> {
    let shape = features.shape();
    if shape.len() != 3 || shape[0] != graphs.n {
        return Err(Error::ShapeMismatch {
            op: "graph_operation",
            lhs: shape,
            rhs: vec![graphs.n],
        });
    }
    let n = graphs.n;
    let t_h = shape[1];
    if graphs.g_fixed_per_frame.len() != t_h {
        return Err(Error::ShapeMismatch {
            op: "graph_operation frames",
            lhs: vec![graphs.g_fixed_per_frame.len()],
            rhs: vec![t_h],
        });
    }

    let trainable: Option<[Tensor; 2]> = if use_trainable {
        let self_block = tape.slice_block(&block.graph_self, n)?;
        let spatial_block = tape.slice_block(&block.graph_spatial, n)?;
        Some([self_block, spatial_block])
    } else {
        None
    };

    let mut slices = Vec::with_capacity(t_h);
    for t in 0..t_h {
        let xt = tape.slice_time(features, t)?;
        let mut acc: Option<Tensor> = None;
        for j in 0..2 {
            let fixed = Tensor::from_vec(&[n, n], graphs.g_fixed_per_frame[t][j].clone())?;
            let mixer = match &trainable {
                Some(corrections) if j == 1 || train_self_graph => {
                    tape.add(&fixed, &corrections[j])?
                }
                _ => fixed,
            };
            let term = tape.matmul(&mixer, &xt)?;
            acc = Some(match acc {
                None => term,
                Some(prev) => tape.add(&prev, &term)?,
            });
        }
        slices.push(acc.expect("two graphs always summed"));
    }
    tape.stack_time(&slices)
}

/// Full front-end forward pass; output shape `n × t_history × channels`.
pub fn graph_conv_forward(
    tape: &Tape,
    input: &ModelInput,
    graphs: &GraphStack,
    params: &ModelParams,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let cfg = &params.config;
    let mut x = channel_lift(tape, input, params)?;
    for block in &params.blocks {
        let block_input = x.clone();
        let mixed = graph_operation(
            tape,
            &x,
            graphs,
            block,
            cfg.use_trainable_graph,
            cfg.train_self_graph,
        )?;
        let mut y = tape.conv_temporal(&mixed, &block.tconv_w, &block.tconv_b, 1, 1)?;
        if cfg.use_batch_norm {
            let shape = y.shape();
            let flat = tape.reshape(&y, &[1, shape[0], shape[1], shape[2]])?;
            let mut stats = block.bn_stats.borrow_mut();
            let normed = tape.batch_norm(
                &flat,
                &block.bn_scale,
                &block.bn_shift,
                &mut stats,
                BN_MOMENTUM,
                BN_EPS,
                phase,
            )?;
            drop(stats);
            y = tape.reshape(&normed, &shape)?;
        }
        y = tape.relu(&y)?;
        if cfg.dropout > 0.0 {
            y = tape.dropout(&y, cfg.dropout, phase, rng)?;
        }
        x = if cfg.skip_connections {
            tape.add(&y, &block_input)?
        } else {
            y
        };
    }
    Ok(x)
}
