//! trajcast: multi-agent trajectory prediction.
//!
//! Given observed position histories of every agent in a traffic scene, the
//! model predicts all agents' future positions simultaneously. Scenes are
//! encoded as per-frame proximity graphs; features flow through fixed plus
//! trainable graph convolutions interleaved with temporal convolutions, and
//! an ensemble of residual encoder-decoder recurrent networks rolls future
//! velocities forward, which are integrated back into positions.
//!
//! The crate is organized as a library with runnable examples (see
//! `examples/`) plus a thin `trajcast` binary exposing `synth`, `train`,
//! `predict`, `eval` and `ablate` subcommands.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
