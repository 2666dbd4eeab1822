use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture of the multi-channel intensity network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of real labels `M`. The network has `M + 1` channels.
    pub label_count: usize,
    /// Width `m` of each channel's slice of the hidden state.
    pub channel_width: usize,
    pub embed_dim: usize,
    /// Number of recent steps `J` kept in the memory bank. Zero disables
    /// attention.
    pub memory_depth: usize,
    /// Fake epochs `K` inserted in each gap.
    pub fake_count: usize,
    /// Hidden width of the first layer of the λ-network.
    pub intensity_hidden: usize,
    /// Feed time stamps as `t / T` instead of raw `t`.
    pub normalize_time: bool,
    /// Elapsed time enters the λ-network as `Δt / dt_scale`.
    pub dt_scale: f64,
    /// Only snapshot the states that follow real events into the bank.
    pub bank_real_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            label_count: 1,
            channel_width: 8,
            embed_dim: 16,
            memory_depth: 3,
            fake_count: 1,
            intensity_hidden: 32,
            normalize_time: true,
            dt_scale: 1.0,
            bank_real_only: false,
        }
    }
}

impl ModelConfig {
    pub fn new(label_count: usize) -> Self {
        Self { label_count, ..Self::default() }
    }

    /// `M + 1`: the real labels plus the fake label.
    pub fn channels(&self) -> usize {
        self.label_count + 1
    }

    /// `m · (M + 1)`.
    pub fn hidden_dim(&self) -> usize {
        self.channel_width * self.channels()
    }

    pub fn input_dim(&self) -> usize {
        self.embed_dim + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.label_count == 0 {
            return bad("label_count must be at least 1");
        }
        if self.channel_width == 0 || self.embed_dim == 0 || self.intensity_hidden == 0 {
            return bad("channel_width, embed_dim and intensity_hidden must be positive");
        }
        if !(self.dt_scale.is_finite() && self.dt_scale > 0.0) {
            return bad("dt_scale must be positive");
        }
        Ok(())
    }
}
