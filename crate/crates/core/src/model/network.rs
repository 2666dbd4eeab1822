//! Tape-level building blocks of the network and the sequence forward pass.

use std::collections::VecDeque;

use super::{ModelConfig, ModelError, ModelParams, ParamNodes};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::streams::{AugmentedSequence, Token, TokenKind};

/// Hidden and cell state of the shared LSTM. Channel `k` owns the slice
/// `[k·m, (k+1)·m)` of both vectors.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, config: &ModelConfig) -> Self {
        let h = tape.constant(Tensor::zeros(&[config.hidden_dim()]));
        let c = tape.constant(Tensor::zeros(&[config.hidden_dim()]));
        Self { h, c }
    }
}

/// Label-specific hidden slices of one past step.
#[derive(Clone, Debug)]
struct BankStep {
    token: usize,
    slices: Vec<NodeId>,
}

/// The `J` most recent steps' real-label channel slices, oldest first.
#[derive(Clone, Debug)]
pub struct MemoryBank {
    depth: usize,
    steps: VecDeque<BankStep>,
}

/// Identity of one bank entry: which token's state it came from and which
/// real label's channel it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BankSlot {
    pub token: usize,
    pub label: usize,
}

impl MemoryBank {
    pub fn new(depth: usize) -> Self {
        Self { depth, steps: VecDeque::with_capacity(depth + 1) }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Snapshots the `M` real-label slices of a state, evicting the oldest
    /// step beyond depth `J`.
    pub fn push(&mut self, token: usize, slices: Vec<NodeId>) {
        if self.depth == 0 {
            return;
        }
        self.steps.push_back(BankStep { token, slices });
        while self.steps.len() > self.depth {
            self.steps.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.steps.iter().map(|s| s.slices.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<NodeId> {
        self.steps.iter().flat_map(|s| s.slices.iter().copied()).collect()
    }

    pub fn slots(&self) -> Vec<BankSlot> {
        self.steps
            .iter()
            .flat_map(|s| (0..s.slices.len()).map(move |label| BankSlot { token: s.token, label }))
            .collect()
    }
}

/// `[Emb(l) ‖ t]`, with `t` divided by the horizon when configured.
pub fn encode_token(
    tape: &mut Tape,
    params: &ParamNodes,
    config: &ModelConfig,
    token: &Token,
    horizon: f64,
) -> Result<NodeId, ModelError> {
    let row = match token.kind {
        TokenKind::Real => token.label,
        _ => config.label_count,
    };
    let emb = tape.row(params.embedding, row)?;
    let t = if config.normalize_time && horizon > 0.0 { token.time / horizon } else { token.time };
    let t = tape.scalar(t);
    Ok(tape.concat(&[emb, t])?)
}

/// One LSTM update over the full hidden vector.
pub fn lstm_step(
    tape: &mut Tape,
    params: &ParamNodes,
    config: &ModelConfig,
    x: NodeId,
    state: LstmState,
) -> Result<LstmState, ModelError> {
    let h = config.hidden_dim();
    let xh = tape.concat(&[x, state.h])?;
    let pre = tape.linear(params.lstm_weight, xh, params.lstm_bias)?;
    let i_pre = tape.slice(pre, 0, h)?;
    let f_pre = tape.slice(pre, h, h)?;
    let g_pre = tape.slice(pre, 2 * h, h)?;
    let o_pre = tape.slice(pre, 3 * h, h)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Attended state of one channel.
#[derive(Clone, Debug)]
pub struct Attended {
    pub h_net: NodeId,
    /// Alignment over the bank entries, in [`MemoryBank::slots`] order.
    pub alpha: Vec<f64>,
}

/// Dot-product attention of `h_k` over a pre-stacked bank matrix, followed by
/// `tanh(W_c [context ‖ h_k])`. With no bank the context is zero.
pub fn attend_stacked(
    tape: &mut Tape,
    params: &ParamNodes,
    h_k: NodeId,
    bank: Option<NodeId>,
) -> Result<Attended, ModelError> {
    let (context, alpha) = match bank {
        Some(b) => {
            let scores = tape.matvec(b, h_k)?;
            let alpha = tape.softmax(scores)?;
            let context = tape.matvec_t(b, alpha)?;
            (context, tape.value(alpha).data().to_vec())
        }
        None => {
            let m = tape.value(h_k).len();
            (tape.constant(Tensor::zeros(&[m])), Vec::new())
        }
    };
    let joined = tape.concat(&[context, h_k])?;
    let mixed = tape.matvec(params.attention_weight, joined)?;
    let h_net = tape.tanh(mixed)?;
    Ok(Attended { h_net, alpha })
}

/// Attention of one channel's slice over a memory bank.
pub fn attend(
    tape: &mut Tape,
    params: &ParamNodes,
    h_k: NodeId,
    bank: &MemoryBank,
) -> Result<Attended, ModelError> {
    let stacked = if bank.is_empty() { None } else { Some(tape.stack(&bank.entries())?) };
    attend_stacked(tape, params, h_k, stacked)
}

/// `softplus(f2(relu(f1([h_net ‖ Δt]))))`, a length-1 vector.
pub fn intensity(
    tape: &mut Tape,
    params: &ParamNodes,
    config: &ModelConfig,
    h_net: NodeId,
    dt: f64,
) -> Result<NodeId, ModelError> {
    let dt = tape.scalar(dt / config.dt_scale);
    let input = tape.concat(&[h_net, dt])?;
    let hidden = tape.linear(params.f1_weight, input, params.f1_bias)?;
    let hidden = tape.relu(hidden)?;
    let out = tape.linear(params.f2_weight, hidden, params.f2_bias)?;
    Ok(tape.softplus(out)?)
}

/// Attention record of one rate-producing token.
#[derive(Clone, Debug, Default)]
pub struct TokenAttention {
    pub slots: Vec<BankSlot>,
    /// `alpha[k]` is channel `k`'s alignment over `slots`; empty when the
    /// bank was empty.
    pub alpha: Vec<Vec<f64>>,
}

/// Output of [`forward`]: one rate vector of length `M + 1` per token after
/// BOS, and the matching attention records.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub params: ParamNodes,
    pub rates: Vec<NodeId>,
    pub attention: Vec<TokenAttention>,
}

impl ForwardPass {
    pub fn rate_values(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.rates.iter().map(|id| tape.value(*id).data().to_vec()).collect()
    }
}

/// Runs the network over a sequence.
///
/// For token `i ≥ 1` the state after token `i − 1` is split into channels,
/// each channel attends over the bank of the `J` steps before it, and the
/// λ-network maps the result and `Δt_i = t_i − t_{i−1}` to `λ^k_{t_i}`. Then
/// the state after `i − 1` enters the bank and token `i` is fed to the LSTM.
pub fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    config: &ModelConfig,
    seq: &AugmentedSequence,
) -> Result<ForwardPass, ModelError> {
    let nodes = params.register(tape);
    forward_with(tape, &nodes, config, seq)
}

/// [`forward`] with parameters that are already on the tape.
pub fn forward_with(
    tape: &mut Tape,
    params: &ParamNodes,
    config: &ModelConfig,
    seq: &AugmentedSequence,
) -> Result<ForwardPass, ModelError> {
    if seq.label_count() != config.label_count {
        return Err(ModelError::LabelMismatch { data: seq.label_count(), model: config.label_count });
    }
    let tokens = seq.tokens();
    let (m, channels, real) = (config.channel_width, config.channels(), config.label_count);
    let mut rates = Vec::with_capacity(tokens.len().saturating_sub(1));
    let mut attention = Vec::with_capacity(tokens.len().saturating_sub(1));
    let Some(first) = tokens.first() else {
        return Ok(ForwardPass { params: *params, rates, attention });
    };

    let mut state = LstmState::zeros(tape, config);
    let x = encode_token(tape, params, config, first, seq.horizon())?;
    state = lstm_step(tape, params, config, x, state)?;
    let mut bank = MemoryBank::new(config.memory_depth);

    for i in 1..tokens.len() {
        let dt = tokens[i].time - tokens[i - 1].time;
        let slices = (0..channels)
            .map(|k| tape.slice(state.h, k * m, m))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = if bank.is_empty() { None } else { Some(tape.stack(&bank.entries())?) };
        let mut per_channel = Vec::with_capacity(channels);
        let mut alpha = Vec::with_capacity(channels);
        for &h_k in &slices {
            let att = attend_stacked(tape, params, h_k, stacked)?;
            per_channel.push(intensity(tape, params, config, att.h_net, dt)?);
            alpha.push(att.alpha);
        }
        rates.push(tape.concat(&per_channel)?);
        let slots = bank.slots();
        attention.push(TokenAttention { alpha: if slots.is_empty() { Vec::new() } else { alpha }, slots });

        if !config.bank_real_only || tokens[i - 1].kind == TokenKind::Real {
            bank.push(i - 1, slices[..real].to_vec());
        }
        if i + 1 < tokens.len() {
            let x = encode_token(tape, params, config, &tokens[i], seq.horizon())?;
            state = lstm_step(tape, params, config, x, state)?;
        }
    }
    Ok(ForwardPass { params: *params, rates, attention })
}

/// Rate vectors for every token after BOS, without keeping the tape.
pub fn predict_rates(
    params: &ModelParams,
    config: &ModelConfig,
    seq: &AugmentedSequence,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, config, seq)?;
    Ok(pass.rate_values(&tape))
}
