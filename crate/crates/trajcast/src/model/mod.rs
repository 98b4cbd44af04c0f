//! The prediction model: graph-convolutional front end feeding an ensemble
//! of residual encoder-decoder recurrent networks.

mod graphconv;
mod params;
mod seq2seq;

pub use graphconv::{channel_lift, graph_conv_forward, graph_operation};
pub use params::{BlockParams, LayerParams, MemberParams, ModelParams, BN_EPS, BN_MOMENTUM};
pub use seq2seq::{decode, encode, predict, rollout, PredictionResult, RnnState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::InputMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Gru,
    Lstm,
}

impl CellType {
    pub fn num_gates(self) -> usize {
        match self {
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }
}

/// Full architectural configuration of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Feature channels after the lift (C).
    pub channels: usize,
    /// Graph-operation + temporal-convolution block count.
    pub num_blocks: usize,
    pub use_batch_norm: bool,
    /// Add trainable graph corrections to the fixed graphs.
    pub use_trainable_graph: bool,
    /// Include a trainable correction for the self (identity) graph too,
    /// not just the spatial one.
    pub train_self_graph: bool,
    pub dropout: f64,
    pub skip_connections: bool,
    pub cell: CellType,
    /// Hidden size multiplier r; hidden units = r * 2 * n_max.
    pub hidden_multiplier: usize,
    /// Ensemble size K.
    pub ensemble: usize,
    /// Residual connection from decoder input to decoder output.
    pub residual: bool,
    pub num_layers: usize,
    /// Agent capacity; scenes with more agents are rejected.
    pub n_max: usize,
    pub input_mode: InputMode,
    /// Spatial edge threshold, in scene units.
    pub d_close: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 64,
            num_blocks: 3,
            use_batch_norm: true,
            use_trainable_graph: true,
            train_self_graph: true,
            dropout: 0.5,
            skip_connections: true,
            cell: CellType::Gru,
            hidden_multiplier: 30,
            ensemble: 3,
            residual: true,
            num_layers: 2,
            n_max: 120,
            input_mode: InputMode::Velocity,
            d_close: 25.0,
        }
    }
}

impl ModelConfig {
    pub fn hidden_size(&self) -> usize {
        self.hidden_multiplier * 2 * self.n_max
    }

    /// Encoder input width: one scene frame of lifted features, flattened.
    pub fn encoder_input_size(&self) -> usize {
        self.n_max * self.channels
    }

    /// Decoder input/output width: one coordinate pair per agent slot.
    pub fn decoder_width(&self) -> usize {
        2 * self.n_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.num_blocks == 0
            || self.hidden_multiplier == 0
            || self.ensemble == 0
            || self.num_layers == 0
            || self.n_max == 0
        {
            return Err(Error::Parameter("model dimensions must all be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.d_close < 0.0 {
            return Err(Error::Parameter("d_close must be >= 0".into()));
        }
        Ok(())
    }

    /// A small configuration for tests and quick experiments.
    pub fn tiny(n_max: usize) -> Self {
        ModelConfig {
            channels: 8,
            num_blocks: 2,
            hidden_multiplier: 2,
            ensemble: 1,
            dropout: 0.0,
            n_max,
            ..ModelConfig::default()
        }
    }
}
