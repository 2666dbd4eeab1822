use super::TrainError;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::model::{forward_with, ModelConfig, ParamNodes};
use crate::streams::{AugmentedSequence, TokenKind};

/// Weights of the auxiliary terms of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    /// Weight `λ_p` of the mean cross-entropy over next-token labels.
    pub prediction: f64,
    /// Weight `λ_w` of the squared λ-network weights.
    pub weight_decay: f64,
}

impl Regularization {
    pub const NONE: Self = Self { prediction: 0.0, weight_decay: 0.0 };
}

fn check_alignment(seq: &AugmentedSequence, n: usize) -> Result<(), TrainError> {
    if n + 1 != seq.len() {
        return Err(TrainError::Alignment { tokens: seq.len(), rates: n });
    }
    Ok(())
}

/// Piecewise-constant log-likelihood
///
/// `Σ_{real i} log λ^{l_i}(t_i) − Σ_{i ≥ 1} (t_i − t_{i−1}) Σ_{k < M} λ^k(t_i)`
///
/// from plain rate vectors, one per token after BOS. The fake channel (index
/// `M`) never enters.
pub fn quadrature_ll(seq: &AugmentedSequence, rates: &[Vec<f64>]) -> Result<f64, TrainError> {
    check_alignment(seq, rates.len())?;
    let m = seq.label_count();
    let tokens = seq.tokens();
    let mut ll = 0.0;
    for (i, r) in rates.iter().enumerate() {
        let tok = &tokens[i + 1];
        if tok.kind == TokenKind::Real {
            let rate = r[tok.label];
            if rate.is_nan() || rate <= 0.0 {
                return Err(TrainError::NonPositiveRate { token: i + 1, rate });
            }
            ll += rate.ln();
        }
        let dt = tok.time - tokens[i].time;
        ll -= dt * r[..m].iter().sum::<f64>();
    }
    Ok(ll)
}

/// [`quadrature_ll`] on the tape.
pub fn quadrature_ll_node(
    tape: &mut Tape,
    seq: &AugmentedSequence,
    rates: &[NodeId],
) -> Result<NodeId, TrainError> {
    check_alignment(seq, rates.len())?;
    let m = seq.label_count();
    let tokens = seq.tokens();
    let mut picked = Vec::new();
    let mut totals = Vec::with_capacity(rates.len());
    let mut gaps = Vec::with_capacity(rates.len());
    for (i, &r) in rates.iter().enumerate() {
        let tok = &tokens[i + 1];
        if tok.kind == TokenKind::Real {
            let rate = tape.value(r).data()[tok.label];
            if rate.is_nan() || rate <= 0.0 {
                return Err(TrainError::NonPositiveRate { token: i + 1, rate });
            }
            picked.push(tape.index(r, tok.label)?);
        }
        let real = tape.slice(r, 0, m)?;
        totals.push(tape.sum(real)?);
        gaps.push(tok.time - tokens[i].time);
    }
    let totals = tape.concat(&totals)?;
    let gaps = tape.constant(Tensor::vector(gaps));
    let integral = tape.dot(gaps, totals)?;
    if picked.is_empty() {
        return Ok(tape.neg(integral)?);
    }
    let picked = tape.concat(&picked)?;
    let logs = tape.log(picked)?;
    let logs = tape.sum(logs)?;
    Ok(tape.sub(logs, integral)?)
}

/// Targets of the next-token prediction: every token after BOS except EOS,
/// with fakes mapped to label `M`.
fn prediction_targets(seq: &AugmentedSequence) -> impl Iterator<Item = (usize, usize)> + '_ {
    seq.tokens()
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, t)| t.kind != TokenKind::Eos)
        .map(|(i, t)| (i - 1, t.label))
}

/// Mean cross-entropy of `softmax(λ)` over all `M + 1` channels against each
/// token's label. Zero when there are no targets.
pub fn prediction_loss(seq: &AugmentedSequence, rates: &[Vec<f64>]) -> Result<f64, TrainError> {
    check_alignment(seq, rates.len())?;
    let (mut total, mut n) = (0.0, 0usize);
    for (i, label) in prediction_targets(seq) {
        let r = &rates[i];
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - r[label];
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// [`prediction_loss`] on the tape.
pub fn prediction_loss_node(
    tape: &mut Tape,
    seq: &AugmentedSequence,
    rates: &[NodeId],
) -> Result<NodeId, TrainError> {
    check_alignment(seq, rates.len())?;
    let mut lses = Vec::new();
    let mut picked = Vec::new();
    for (i, label) in prediction_targets(seq) {
        lses.push(tape.logsumexp(rates[i])?);
        picked.push(tape.index(rates[i], label)?);
    }
    if lses.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let n = lses.len() as f64;
    let lses = tape.concat(&lses)?;
    let picked = tape.concat(&picked)?;
    let diff = tape.sub(lses, picked)?;
    let total = tape.sum(diff)?;
    Ok(tape.scale(total, 1.0 / n)?)
}

/// `‖f1‖² + ‖f2‖²` over the λ-network weight matrices on the tape.
pub fn weight_penalty_node(tape: &mut Tape, params: &ParamNodes) -> Result<NodeId, TrainError> {
    let a = tape.dot(params.f1_weight, params.f1_weight)?;
    let b = tape.dot(params.f2_weight, params.f2_weight)?;
    Ok(tape.add(a, b)?)
}

/// Handles of the objective and its parts for one sequence.
#[derive(Clone, Debug)]
pub struct ObjectiveNodes {
    pub objective: NodeId,
    pub ll: NodeId,
    pub prediction: NodeId,
    pub penalty: NodeId,
    pub rates: Vec<NodeId>,
}

/// `LL − λ_p · L_p − λ_w · L_w` for one sequence, to be maximized.
pub fn objective(
    tape: &mut Tape,
    params: &ParamNodes,
    config: &ModelConfig,
    reg: Regularization,
    seq: &AugmentedSequence,
) -> Result<ObjectiveNodes, TrainError> {
    let pass = forward_with(tape, params, config, seq)?;
    let ll = quadrature_ll_node(tape, seq, &pass.rates)?;
    let prediction = prediction_loss_node(tape, seq, &pass.rates)?;
    let penalty = weight_penalty_node(tape, params)?;
    let p = tape.scale(prediction, reg.prediction)?;
    let w = tape.scale(penalty, reg.weight_decay)?;
    let objective = tape.sub(ll, p)?;
    let objective = tape.sub(objective, w)?;
    Ok(ObjectiveNodes { objective, ll, prediction, penalty, rates: pass.rates })
}
