use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::autodiff::{NodeId, Tape, Tensor};

/// Names of the parameter tensors in their fixed serialization order.
pub const PARAM_NAMES: [&str; 8] = [
    "embedding",
    "lstm_weight",
    "lstm_bias",
    "attention_weight",
    "f1_weight",
    "f1_bias",
    "f2_weight",
    "f2_bias",
];

/// All trainable tensors.
///
/// The LSTM weight acts on `[x ‖ h]` and stacks the gate blocks in the order
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `(M + 1) × embed_dim`; row `M` is shared by the fake label and sentinels.
    pub embedding: Tensor,
    /// `4H × (embed_dim + 1 + H)`.
    pub lstm_weight: Tensor,
    /// `4H`.
    pub lstm_bias: Tensor,
    /// `m × 2m`, applied to `[context ‖ h_k]` for every channel.
    pub attention_weight: Tensor,
    /// `hidden_f1 × (m + 1)`.
    pub f1_weight: Tensor,
    pub f1_bias: Tensor,
    /// `1 × hidden_f1`.
    pub f2_weight: Tensor,
    pub f2_bias: Tensor,
}

pub(crate) fn shapes(config: &ModelConfig) -> [Vec<usize>; 8] {
    let h = config.hidden_dim();
    let m = config.channel_width;
    let f = config.intensity_hidden;
    [
        vec![config.channels(), config.embed_dim],
        vec![4 * h, config.input_dim() + h],
        vec![4 * h],
        vec![m, 2 * m],
        vec![f, m + 1],
        vec![f],
        vec![1, f],
        vec![1],
    ]
}

impl ModelParams {
    /// Uniform `(−1/√fan_in, 1/√fan_in)` initialization with forget-gate
    /// biases set to `+1`. Embedding rows use fan-in 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = shapes(config);
        let fan_in = [1, shapes[1][1], shapes[1][1], 2 * config.channel_width, config.channel_width + 1,
            config.channel_width + 1, config.intensity_hidden, config.intensity_hidden];
        let mut tensors: Vec<Tensor> = shapes
            .iter()
            .zip(fan_in)
            .map(|(shape, fan)| {
                let bound = 1.0 / (fan as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape.clone(), data).expect("finite init")
            })
            .collect();
        let h = config.hidden_dim();
        tensors[2].data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        Ok(Self::from_tensors(tensors))
    }

    /// Every entry zero: each channel's rate is `softplus(0) = ln 2`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::from_tensors(shapes(config).iter().map(|s| Tensor::zeros(s)).collect())
    }

    fn from_tensors(mut t: Vec<Tensor>) -> Self {
        let mut next = || t.remove(0);
        Self {
            embedding: next(),
            lstm_weight: next(),
            lstm_bias: next(),
            attention_weight: next(),
            f1_weight: next(),
            f1_bias: next(),
            f2_weight: next(),
            f2_bias: next(),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.embedding,
            &self.lstm_weight,
            &self.lstm_bias,
            &self.attention_weight,
            &self.f1_weight,
            &self.f1_bias,
            &self.f2_weight,
            &self.f2_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.embedding,
            &mut self.lstm_weight,
            &mut self.lstm_bias,
            &mut self.attention_weight,
            &mut self.f1_weight,
            &mut self.f1_bias,
            &mut self.f2_weight,
            &mut self.f2_bias,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Concatenation of all tensors in [`PARAM_NAMES`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self, ModelError> {
        let shapes = shapes(config);
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if flat.len() != total {
            return Err(ModelError::ParamCount { expected: total, actual: flat.len() });
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(8);
        for shape in shapes {
            let n: usize = shape.iter().product();
            tensors.push(Tensor::new(shape, flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(Self::from_tensors(tensors))
    }

    /// Whether the tensor shapes match `config`.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        self.tensors().iter().zip(shapes(config)).all(|(t, s)| t.shape() == s.as_slice())
    }

    /// Places every tensor on `tape` as a leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamNodes {
        ParamNodes {
            embedding: tape.leaf(self.embedding.clone()),
            lstm_weight: tape.leaf(self.lstm_weight.clone()),
            lstm_bias: tape.leaf(self.lstm_bias.clone()),
            attention_weight: tape.leaf(self.attention_weight.clone()),
            f1_weight: tape.leaf(self.f1_weight.clone()),
            f1_bias: tape.leaf(self.f1_bias.clone()),
            f2_weight: tape.leaf(self.f2_weight.clone()),
            f2_bias: tape.leaf(self.f2_bias.clone()),
        }
    }

    /// `Σ‖f1‖² + Σ‖f2‖²` over weights only.
    pub fn intensity_weight_norm(&self) -> f64 {
        self.f1_weight.squared_norm() + self.f2_weight.squared_norm()
    }
}

/// Tape handles of the parameter leaves.
#[derive(Clone, Copy, Debug)]
pub struct ParamNodes {
    pub embedding: NodeId,
    pub lstm_weight: NodeId,
    pub lstm_bias: NodeId,
    pub attention_weight: NodeId,
    pub f1_weight: NodeId,
    pub f1_bias: NodeId,
    pub f2_weight: NodeId,
    pub f2_bias: NodeId,
}

impl ParamNodes {
    pub fn all(&self) -> [NodeId; 8] {
        [
            self.embedding,
            self.lstm_weight,
            self.lstm_bias,
            self.attention_weight,
            self.f1_weight,
            self.f1_bias,
            self.f2_weight,
            self.f2_bias,
        ]
    }

    /// Reads the accumulated leaf gradients back into parameter layout.
    pub fn gradients(&self, tape: &Tape) -> ModelParams {
        let tensors = self.all().iter().map(|id| tape.grad(*id).expect("leaf").clone()).collect();
        ModelParams::from_tensors(tensors)
    }
}
