//! Clip-to-model-input conversion and proximity graph construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SceneClip;
use crate::tensor::Tensor;

/// Degree regularizer keeping adjacency normalization finite on empty rows.
pub const GRAPH_ALPHA: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Velocity,
    NormalizedPosition,
}

/// The model-ready view of a clip's history.
#[derive(Clone, Debug)]
pub struct ModelInput {
    /// `n × t_history × 2` feature tensor (velocities or scaled positions).
    pub values: Tensor,
    pub mode: InputMode,
    /// Exact coordinates at the final history frame, per agent.
    pub last_positions: Vec<[f64; 2]>,
    /// History observation mask, `n × t_history`.
    pub mask: Vec<Vec<bool>>,
    /// Divisor used by [`InputMode::NormalizedPosition`].
    pub norm_scale: Option<f64>,
}

impl ModelInput {
    pub fn num_agents(&self) -> usize {
        self.last_positions.len()
    }

    /// Copy with fresh value storage. `Tensor` handles share storage on
    /// `clone`, so mutating transforms (e.g. rotation augmentation) must
    /// work on a deep copy.
    pub fn deep_clone(&self) -> Self {
        ModelInput {
            values: Tensor::from_vec(&self.values.shape(), self.values.value())
                .expect("same shape"),
            mode: self.mode,
            last_positions: self.last_positions.clone(),
            mask: self.mask.clone(),
            norm_scale: self.norm_scale,
        }
    }

    pub fn t_history(&self) -> usize {
        self.mask.first().map_or(0, |m| m.len())
    }

    /// Feature vector at the final history frame, per agent. In velocity
    /// mode this is the last observed velocity (zero across unobserved
    /// frames), the natural seed for constant-velocity extrapolation.
    pub fn last_step_values(&self) -> Vec<[f64; 2]> {
        let t_h = self.t_history();
        let n = self.num_agents();
        let data = self.values.value();
        (0..n)
            .map(|i| {
                let base = (i * t_h + (t_h - 1)) * 2;
                [data[base], data[base + 1]]
            })
            .collect()
    }
}

/// First-difference velocities, front-padded with a zero step so the time
/// axis keeps `t_history` columns. Pairs with an unobserved end are zero.
pub fn to_velocity(clip: &SceneClip) -> Result<ModelInput> {
    let t_h = clip.t_history;
    if t_h < 2 {
        return Err(Error::Parameter(format!(
            "velocity input needs t_history >= 2, got {t_h}"
        )));
    }
    let n = clip.num_agents();
    let mut data = vec![0.0; n * t_h * 2];
    for (i, (pos, mask)) in clip.positions.iter().zip(&clip.mask).enumerate() {
        for t in 1..t_h {
            if mask[t] && mask[t - 1] {
                let base = (i * t_h + t) * 2;
                data[base] = pos[t][0] - pos[t - 1][0];
                data[base + 1] = pos[t][1] - pos[t - 1][1];
            }
        }
    }
    Ok(ModelInput {
        values: Tensor::from_vec(&[n, t_h, 2], data)?,
        mode: InputMode::Velocity,
        last_positions: clip
            .positions
            .iter()
            .map(|p| p[clip.last_history_index()])
            .collect(),
        mask: clip.mask.iter().map(|m| m[..t_h].to_vec()).collect(),
        norm_scale: None,
    })
}

/// Positions divided by a training-set-wide scale so coordinates land in
/// `[-1, 1]`. Ablation-only input mode.
pub fn to_normalized_position(clip: &SceneClip, max_abs: f64) -> Result<ModelInput> {
    if !(max_abs > 0.0) {
        return Err(Error::Parameter(format!(
            "normalization scale must be positive, got {max_abs}"
        )));
    }
    let t_h = clip.t_history;
    let n = clip.num_agents();
    let mut data = vec![0.0; n * t_h * 2];
    for (i, (pos, mask)) in clip.positions.iter().zip(&clip.mask).enumerate() {
        for t in 0..t_h {
            if mask[t] {
                let base = (i * t_h + t) * 2;
                data[base] = pos[t][0] / max_abs;
                data[base + 1] = pos[t][1] / max_abs;
            }
        }
    }
    Ok(ModelInput {
        values: Tensor::from_vec(&[n, t_h, 2], data)?,
        mode: InputMode::NormalizedPosition,
        last_positions: clip
            .positions
            .iter()
            .map(|p| p[clip.last_history_index()])
            .collect(),
        mask: clip.mask.iter().map(|m| m[..t_h].to_vec()).collect(),
        norm_scale: Some(max_abs),
    })
}

/// Largest absolute coordinate over the mask-true entries of a clip set;
/// the scale for [`to_normalized_position`].
pub fn max_abs_coordinate(clips: &[SceneClip]) -> f64 {
    let mut max_abs = 0.0f64;
    for clip in clips {
        for (pos, mask) in clip.positions.iter().zip(&clip.mask) {
            for (p, m) in pos.iter().zip(mask) {
                if *m {
                    max_abs = max_abs.max(p[0].abs()).max(p[1].abs());
                }
            }
        }
    }
    max_abs
}

/// Ground-truth future velocities (`n × t_future × 2`) with the same
/// zero-fill rule as [`to_velocity`]: a step is nonzero only when both of
/// its endpoint frames are observed.
pub fn future_velocities(clip: &SceneClip) -> Vec<Vec<[f64; 2]>> {
    let t_h = clip.t_history;
    let t_f = clip.t_future();
    clip.positions
        .iter()
        .zip(&clip.mask)
        .map(|(pos, mask)| {
            (0..t_f)
                .map(|s| {
                    let t = t_h + s;
                    if mask[t] && mask[t - 1] {
                        [pos[t][0] - pos[t - 1][0], pos[t][1] - pos[t - 1][1]]
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-frame adjacency pair and its normalized form.
///
/// `a0` is the identity (self connections); each `a1` connects agents whose
/// Euclidean distance at that frame is strictly below `d_close` (both
/// observed). `g_fixed_per_frame[t]` holds the normalized `[a0, a1]` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStack {
    pub n: usize,
    pub a0: Vec<f64>,
    pub a1_per_frame: Vec<Vec<f64>>,
    pub g_fixed_per_frame: Vec<[Vec<f64>; 2]>,
    pub d_close: f64,
    pub alpha: f64,
}

/// Symmetric degree normalization with an `alpha` ridge on the degrees.
pub fn normalize_adjacency(a: &[f64], n: usize, alpha: f64) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = a[i * n..(i + 1) * n].iter().sum();
        inv_sqrt_deg[i] = 1.0 / (deg + alpha).sqrt();
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[i * n + j] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    out
}

/// Build the per-history-frame graph stack for a clip.
pub fn build_graphs(clip: &SceneClip, d_close: f64) -> Result<GraphStack> {
    if d_close < 0.0 {
        return Err(Error::Parameter(format!(
            "d_close must be >= 0, got {d_close}"
        )));
    }
    let n = clip.num_agents();
    let t_h = clip.t_history;
    let mut a0 = vec![0.0; n * n];
    for i in 0..n {
        a0[i * n + i] = 1.0;
    }
    let mut a1_per_frame = Vec::with_capacity(t_h);
    let mut g_fixed_per_frame = Vec::with_capacity(t_h);
    for t in 0..t_h {
        let mut a1 = vec![0.0; n * n];
        for i in 0..n {
            if !clip.mask[i][t] {
                continue;
            }
            for j in (i + 1)..n {
                if !clip.mask[j][t] {
                    continue;
                }
                let dx = clip.positions[i][t][0] - clip.positions[j][t][0];
                let dy = clip.positions[i][t][1] - clip.positions[j][t][1];
                if (dx * dx + dy * dy).sqrt() < d_close {
                    a1[i * n + j] = 1.0;
                    a1[j * n + i] = 1.0;
                }
            }
        }
        let g0 = normalize_adjacency(&a0, n, GRAPH_ALPHA);
        let g1 = normalize_adjacency(&a1, n, GRAPH_ALPHA);
        g_fixed_per_frame.push([g0, g1]);
        a1_per_frame.push(a1);
    }
    Ok(GraphStack {
        n,
        a0,
        a1_per_frame,
        g_fixed_per_frame,
        d_close,
        alpha: GRAPH_ALPHA,
    })
}
