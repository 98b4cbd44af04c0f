//! Encoder-decoder recurrent prediction over graph features.
//!
//! Each ensemble member consumes the graph feature frame by frame (flattened
//! across agent slots), transfers its final hidden state into a decoder that
//! rolls out one step per future frame, feeding each step's output into the
//! next. With residual decoding the readout learns only the change of the
//! input quantity, so a zeroed readout is exact constant-velocity rollout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CellType, LayerParams, MemberParams, ModelParams};
use crate::error::{Error, Result};
use crate::model::graph_conv_forward;
use crate::preprocess::{GraphStack, InputMode, ModelInput};
use crate::tensor::{Phase, Tape, Tensor};

/// Hidden state of a recurrent stack: one (and for LSTM, two) `[1, H]`
/// tensors per layer.
#[derive(Clone)]
pub struct RnnState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
}

impl RnnState {
    fn zeros(cell: CellType, num_layers: usize, hidden: usize) -> Self {
        let h = (0..num_layers)
            .map(|_| Tensor::zeros(&[1, hidden]))
            .collect();
        let c = match cell {
            CellType::Gru => Vec::new(),
            CellType::Lstm => (0..num_layers)
                .map(|_| Tensor::zeros(&[1, hidden]))
                .collect(),
        };
        RnnState { h, c }
    }
}

fn gate_preact(
    tape: &Tape,
    layer: &LayerParams,
    gate: usize,
    x: &Tensor,
    h: &Tensor,
) -> Result<Tensor> {
    let xi = tape.matmul(x, &layer.w_input[gate])?;
    let xi = tape.add(&xi, &layer.b_input[gate])?;
    let hh = tape.matmul(h, &layer.w_hidden[gate])?;
    let hh = tape.add(&hh, &layer.b_hidden[gate])?;
    tape.add(&xi, &hh)
}

fn gru_step(tape: &Tape, layer: &LayerParams, x: &Tensor, h: &Tensor) -> Result<Tensor> {
    let reset = tape.sigmoid(&gate_preact(tape, layer, 0, x, h)?)?;
    let update = tape.sigmoid(&gate_preact(tape, layer, 1, x, h)?)?;
    // Candidate gate applies the reset gate to the hidden contribution
    // (including its bias) before the activation.
    let xn = tape.add(&tape.matmul(x, &layer.w_input[2])?, &layer.b_input[2])?;
    let hn = tape.add(&tape.matmul(h, &layer.w_hidden[2])?, &layer.b_hidden[2])?;
    let candidate = tape.tanh(&tape.add(&xn, &tape.mul(&reset, &hn)?)?)?;
    let ones = Tensor::ones(&candidate.shape());
    let keep = tape.sub(&ones, &update)?;
    tape.add(&tape.mul(&keep, &candidate)?, &tape.mul(&update, h)?)
}

fn lstm_step(
    tape: &Tape,
    layer: &LayerParams,
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let input_g = tape.sigmoid(&gate_preact(tape, layer, 0, x, h)?)?;
    let forget_g = tape.sigmoid(&gate_preact(tape, layer, 1, x, h)?)?;
    let cell_g = tape.tanh(&gate_preact(tape, layer, 2, x, h)?)?;
    let output_g = tape.sigmoid(&gate_preact(tape, layer, 3, x, h)?)?;
    let c_next = tape.add(&tape.mul(&forget_g, c)?, &tape.mul(&input_g, &cell_g)?)?;
    let h_next = tape.mul(&output_g, &tape.tanh(&c_next)?)?;
    Ok((h_next, c_next))
}

fn stack_step(
    tape: &Tape,
    cell: CellType,
    layers: &[LayerParams],
    state: &mut RnnState,
    input: &Tensor,
) -> Result<Tensor> {
    let mut layer_in = input.clone();
    for (l, layer) in layers.iter().enumerate() {
        match cell {
            CellType::Gru => {
                let h_next = gru_step(tape, layer, &layer_in, &state.h[l])?;
                state.h[l] = h_next.clone();
                layer_in = h_next;
            }
            CellType::Lstm => {
                let (h_next, c_next) = lstm_step(tape, layer, &layer_in, &state.h[l], &state.c[l])?;
                state.h[l] = h_next.clone();
                state.c[l] = c_next;
                layer_in = state.h[l].clone();
            }
        }
    }
    Ok(layer_in)
}

/// Consume the graph feature frame by frame; returns the final hidden state
/// of all layers.
pub fn encode(
    tape: &Tape,
    feature: &Tensor,
    member: &MemberParams,
    params: &ModelParams,
) -> Result<RnnState> {
    let cfg = &params.config;
    let shape = feature.shape();
    if shape.len() != 3 || shape[2] != cfg.channels {
        return Err(Error::ShapeMismatch {
            op: "encode",
            lhs: shape,
            rhs: vec![cfg.channels],
        });
    }
    let t_h = shape[1];
    let mut state = RnnState::zeros(cfg.cell, cfg.num_layers, cfg.hidden_size());
    for t in 0..t_h {
        let frame = tape.slice_time(feature, t)?;
        let padded = tape.pad_rows(&frame, cfg.n_max)?;
        let flat = tape.reshape(&padded, &[1, cfg.encoder_input_size()])?;
        stack_step(tape, cfg.cell, &member.encoder, &mut state, &flat)?;
    }
    Ok(state)
}

/// Roll the decoder forward `t_f` steps from the encoder state.
///
/// The first step consumes `first_input` (the last observed per-agent value
/// in the model's input space); each subsequent step consumes the previous
/// step's prediction. `slot_mask` zeroes the padding agent slots in every
/// prediction so garbage never feeds back.
pub fn decode(
    tape: &Tape,
    mut state: RnnState,
    first_input: &Tensor,
    t_f: usize,
    member: &MemberParams,
    params: &ModelParams,
    slot_mask: &Tensor,
) -> Result<Vec<Tensor>> {
    if t_f == 0 {
        return Err(Error::Parameter("decode requires t_f >= 1".into()));
    }
    let cfg = &params.config;
    let mut input = first_input.clone();
    let mut steps = Vec::with_capacity(t_f);
    for _ in 0..t_f {
        let hidden = stack_step(tape, cfg.cell, &member.decoder, &mut state, &input)?;
        let mut out = tape.add(&tape.matmul(&hidden, &member.readout_w)?, &member.readout_b)?;
        if cfg.residual {
            out = tape.add(&out, &input)?;
        }
        let masked = tape.mul(&out, slot_mask)?;
        steps.push(masked.clone());
        input = masked;
    }
    Ok(steps)
}

fn flatten_slots(pairs: &[[f64; 2]], n_max: usize) -> Vec<f64> {
    let mut flat = vec![0.0; 2 * n_max];
    for (i, p) in pairs.iter().enumerate() {
        flat[2 * i] = p[0];
        flat[2 * i + 1] = p[1];
    }
    flat
}

/// Run the graph front end once, then encode/decode with the selected
/// ensemble members. Returns per-member decoded step vectors (`[1, 2*n_max]`
/// each) in the model's input space.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    tape: &Tape,
    input: &ModelInput,
    graphs: &GraphStack,
    params: &ModelParams,
    member_indices: &[usize],
    t_f: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Tensor>>> {
    let cfg = &params.config;
    let n = input.num_agents();
    if n > cfg.n_max {
        return Err(Error::Capacity {
            n,
            n_max: cfg.n_max,
        });
    }
    if input.mode != cfg.input_mode {
        return Err(Error::Usage(format!(
            "input mode {:?} does not match the model's configured {:?}",
            input.mode, cfg.input_mode
        )));
    }
    let feature = graph_conv_forward(tape, input, graphs, params, phase, rng)?;
    let first_input = Tensor::from_vec(
        &[1, cfg.decoder_width()],
        flatten_slots(&input.last_step_values(), cfg.n_max),
    )?;
    let mut mask = vec![0.0; cfg.decoder_width()];
    mask[..2 * n].fill(1.0);
    let slot_mask = Tensor::from_vec(&[1, cfg.decoder_width()], mask)?;

    let mut rollouts = Vec::with_capacity(member_indices.len());
    for &k in member_indices {
        let member = params
            .members
            .get(k)
            .ok_or_else(|| Error::Usage(format!("no ensemble member {k}")))?;
        let state = encode(tape, &feature, member, params)?;
        let steps = decode(tape, state, &first_input, t_f, member, params, &slot_mask)?;
        rollouts.push(steps);
    }
    Ok(rollouts)
}

/// Predicted futures for every agent of one scene.
#[derive(Clone, Debug)]
pub struct PredictionResult {
    /// Per-step displacements, `n × t_f × 2`.
    pub velocities: Vec<Vec<[f64; 2]>>,
    /// Reconstructed coordinates, `n × t_f × 2`.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Raw per-member displacement fields, `K × n × t_f × 2`.
    pub per_member_velocities: Option<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn steps_to_agents(steps: &[Vec<f64>], n: usize) -> Vec<Vec<[f64; 2]>> {
    (0..n)
        .map(|i| {
            steps
                .iter()
                .map(|s| [s[2 * i], s[2 * i + 1]])
                .collect::<Vec<[f64; 2]>>()
        })
        .collect()
}

/// Deterministic inference: ensemble members' decoded fields are averaged
/// elementwise, then integrated back into positions.
pub fn predict(
    input: &ModelInput,
    graphs: &GraphStack,
    params: &ModelParams,
    t_f: usize,
) -> Result<PredictionResult> {
    let cfg = &params.config;
    let tape = Tape::inactive();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let members: Vec<usize> = (0..cfg.ensemble).collect();
    let rollouts = rollout(
        &tape,
        input,
        graphs,
        params,
        &members,
        t_f,
        Phase::Eval,
        &mut rng,
    )?;
    let n = input.num_agents();
    let k = rollouts.len() as f64;

    let member_steps: Vec<Vec<Vec<f64>>> = rollouts
        .iter()
        .map(|steps| steps.iter().map(|s| s.value()).collect())
        .collect();
    let mut mean_steps = vec![vec![0.0; cfg.decoder_width()]; t_f];
    for steps in &member_steps {
        for (acc, s) in mean_steps.iter_mut().zip(steps) {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v / k;
            }
        }
    }

    let (velocities, positions) = match cfg.input_mode {
        InputMode::Velocity => {
            let velocities = steps_to_agents(&mean_steps, n);
            let positions = velocities
                .iter()
                .zip(&input.last_positions)
                .map(|(vs, last)| {
                    let mut p = *last;
                    vs.iter()
                        .map(|v| {
                            p[0] += v[0];
                            p[1] += v[1];
                            p
                        })
                        .collect::<Vec<[f64; 2]>>()
                })
                .collect();
            (velocities, positions)
        }
        InputMode::NormalizedPosition => {
            let scale = input
                .norm_scale
                .or(params.norm_scale)
                .ok_or_else(|| Error::Usage("missing normalization scale".into()))?;
            let normed = steps_to_agents(&mean_steps, n);
            let positions: Vec<Vec<[f64; 2]>> = normed
                .iter()
                .map(|ps| ps.iter().map(|p| [p[0] * scale, p[1] * scale]).collect())
                .collect();
            let velocities = positions
                .iter()
                .zip(&input.last_positions)
                .map(|(ps, last)| {
                    let mut prev = *last;
                    ps.iter()
                        .map(|p| {
                            let v = [p[0] - prev[0], p[1] - prev[1]];
                            prev = *p;
                            v
                        })
                        .collect::<Vec<[f64; 2]>>()
                })
                .collect();
            (velocities, positions)
        }
    };

    let per_member = member_steps
        .iter()
        .map(|steps| steps_to_agents(steps, n))
        .collect();
    Ok(PredictionResult {
        velocities,
        positions,
        per_member_velocities: Some(per_member),
    })
}
