//! The multi-channel recurrent intensity network.
//!
//! A single LSTM runs over the augmented token sequence. Its hidden state of
//! width `m · (M + 1)` is read as `M + 1` channels of width `m`, one per real
//! label and one for the fake label. Each channel attends over a bank holding
//! the real-label slices of the `J` previous steps, and a shared two-layer
//! network maps the attended slice and the elapsed time to that channel's
//! intensity.

mod checkpoint;
mod config;
mod network;
mod params;

use thiserror::Error;

use crate::autodiff::TensorError;

pub use checkpoint::{Checkpoint, CheckpointHeader, TensorLayout};
pub use config::ModelConfig;
pub use network::{
    attend, attend_stacked, encode_token, forward, forward_with, intensity, lstm_step, predict_rates,
    Attended, BankSlot, ForwardPass, LstmState, MemoryBank, TokenAttention,
};
pub use params::{ModelParams, ParamNodes, PARAM_NAMES};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("expected {expected} parameters, got {actual}")]
    ParamCount { expected: usize, actual: usize },
    #[error("data has {data} labels but the model was built for {model}")]
    LabelMismatch { data: usize, model: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}
