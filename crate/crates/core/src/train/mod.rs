//! The regularized maximum-likelihood objective and the Adam training loop.

mod objective;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, TensorError};
use crate::model::{forward, predict_rates, ModelConfig, ModelError, ModelParams};
use crate::par;
use crate::streams::{augment, AugmentedSequence, Dataset};

pub use objective::{
    objective, prediction_loss, prediction_loss_node, quadrature_ll, quadrature_ll_node, weight_penalty_node,
    ObjectiveNodes, Regularization,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{tokens} tokens need {} rate vectors, got {rates}", tokens.saturating_sub(1))]
    Alignment { tokens: usize, rates: usize },
    #[error("non-positive rate {rate} at token {token}")]
    NonPositiveRate { token: usize, rate: f64 },
    #[error("non-finite objective in stream {stream}{}: {detail}", token.map(|t| format!(" at token {t}")).unwrap_or_default())]
    NonFinite { stream: String, token: Option<usize>, detail: String },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// `Σ‖f1‖² + ‖f2‖²` over the λ-network weights, biases excluded.
pub fn weight_penalty(params: &ModelParams) -> f64 {
    params.intensity_weight_norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient norm above which the gradient is rescaled.
    pub clip_norm: f64,
    pub epochs: usize,
    /// Streams per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// `λ_p`.
    pub prediction_weight: f64,
    /// `λ_w`.
    pub weight_decay: f64,
    /// Stop after this many epochs without a validation improvement and
    /// return the best parameters. Needs a validation set.
    pub patience: Option<usize>,
    /// Worker threads for per-stream gradients. Does not affect results.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            epochs: 50,
            batch_size: 1,
            seed: 0,
            prediction_weight: 1.0,
            weight_decay: 1e-4,
            patience: None,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn regularization(&self) -> Regularization {
        Regularization { prediction: self.prediction_weight, weight_decay: self.weight_decay }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.learning_rate) || !positive(self.epsilon) || !positive(self.clip_norm) {
            return bad("learning_rate, epsilon and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !non_negative(self.prediction_weight) || !non_negative(self.weight_decay) {
            return bad("prediction_weight and weight_decay must be non-negative");
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1");
        }
        Ok(())
    }
}

/// Objective value, log-likelihood and parameter gradient of one sequence.
#[derive(Clone, Debug)]
pub struct SequenceGradient {
    pub objective: f64,
    pub ll: f64,
    pub gradient: ModelParams,
}

/// Evaluates the objective of one sequence and its gradient with respect to
/// every parameter.
pub fn sequence_gradient(
    params: &ModelParams,
    config: &ModelConfig,
    reg: Regularization,
    seq: &AugmentedSequence,
) -> Result<SequenceGradient, TrainError> {
    let mut tape = Tape::unchecked();
    let nodes = params.register(&mut tape);
    let out = objective(&mut tape, &nodes, config, reg, seq)?;
    let value = tape.value(out.objective).item();
    let ll = tape.value(out.ll).item();
    if !value.is_finite() {
        return Err(TrainError::NonFinite { stream: String::new(), token: None, detail: format!("objective {value}") });
    }
    tape.backward(out.objective)?;
    let gradient = nodes.gradients(&tape);
    Ok(SequenceGradient { objective: value, ll, gradient })
}

/// Pins a non-finite failure to the first token whose rates are bad.
fn diagnose(
    params: &ModelParams,
    config: &ModelConfig,
    seq: &AugmentedSequence,
    stream: &str,
    err: TrainError,
) -> TrainError {
    let token = match &err {
        TrainError::NonPositiveRate { token, .. } => Some(*token),
        _ => {
            let mut tape = Tape::unchecked();
            forward(&mut tape, params, config, seq).ok().and_then(|pass| {
                let rates = pass.rate_values(&tape);
                rates.iter().position(|r| r.iter().any(|v| !v.is_finite() || *v <= 0.0)).map(|i| i + 1)
            })
        }
    };
    match err {
        TrainError::NonFinite { detail, .. } => TrainError::NonFinite { stream: stream.to_string(), token, detail },
        TrainError::NonPositiveRate { rate, .. } => {
            TrainError::NonFinite { stream: stream.to_string(), token, detail: format!("rate {rate}") }
        }
        TrainError::Tensor(e) => TrainError::NonFinite { stream: stream.to_string(), token, detail: e.to_string() },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of per-stream objectives seen during the epoch.
    pub objective: f64,
    pub train_ll: f64,
    pub val_ll: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
    pub steps: u64,
}

impl TrainReport {
    /// CSV with header `epoch,objective,train_ll,val_ll,seconds`. A missing
    /// validation value is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,train_ll,val_ll,seconds\n");
        for r in &self.epochs {
            let val = r.val_ll.map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!("{},{:?},{:?},{},{:.3}\n", r.epoch, r.objective, r.train_ll, val, r.seconds));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrainError> {
        let io = |e| TrainError::Io { path: path.display().to_string(), source: e };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One ascent step: `θ ← θ + lr · m̂ / (√v̂ + ε)`.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p += cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Summed quadrature log-likelihood of already augmented sequences.
fn total_ll(
    params: &ModelParams,
    config: &ModelConfig,
    seqs: &[AugmentedSequence],
    workers: usize,
) -> Result<f64, TrainError> {
    let lls = par::map(workers, seqs, |_, seq| -> Result<f64, TrainError> {
        let rates = predict_rates(params, config, seq)?;
        quadrature_ll(seq, &rates)
    });
    lls.into_iter().sum()
}

/// Fits a model by Adam ascent on the objective summed over training streams.
///
/// Every stream is augmented once with `config.fake_count` fakes. Each epoch
/// visits the streams in a seeded random order, `batch_size` at a time; the
/// per-stream gradients of a batch are summed in stream order, clipped to
/// `clip_norm` and applied. The result is bitwise reproducible for a given
/// seed, whatever `workers` is.
pub fn train(
    data: &Dataset,
    validation: Option<&Dataset>,
    config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    train_from(ModelParams::init(config, train_config.seed)?, data, validation, config, train_config)
}

/// Wall clock for the report; wasm has none, so epochs there report zero seconds.
fn clock() -> Option<Instant> {
    if cfg!(target_family = "wasm") {
        None
    } else {
        Some(Instant::now())
    }
}

/// [`train`] starting from given parameters.
pub fn train_from(
    initial: ModelParams,
    data: &Dataset,
    validation: Option<&Dataset>,
    config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    train_config.validate()?;
    if data.streams().is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    for d in std::iter::once(data).chain(validation) {
        if d.label_count() != config.label_count {
            return Err(ModelError::LabelMismatch { data: d.label_count(), model: config.label_count }.into());
        }
    }
    if !initial.matches(config) {
        return Err(TrainError::Config("initial parameters do not match the model config".into()));
    }
    let seqs: Vec<AugmentedSequence> = data.streams().iter().map(|s| augment(s, config.fake_count)).collect();
    let val_seqs: Option<Vec<AugmentedSequence>> =
        validation.map(|v| v.streams().iter().map(|s| augment(s, config.fake_count)).collect());
    let reg = train_config.regularization();
    let workers = train_config.workers.max(1);

    let mut params = initial;
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed ^ 0x7472_6169_6e00_0000);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=train_config.epochs {
        let start = clock();
        order.shuffle(&mut rng);
        let (mut obj_sum, mut ll_sum) = (0.0, 0.0);
        for batch in order.chunks(train_config.batch_size) {
            let results = par::map(workers, batch, |_, &i| {
                sequence_gradient(&params, config, reg, &seqs[i])
                    .map_err(|e| diagnose(&params, config, &seqs[i], data.streams()[i].id(), e))
            });
            let mut grad = vec![0.0; theta.len()];
            for r in results {
                let r = r?;
                obj_sum += r.objective;
                ll_sum += r.ll;
                for (g, x) in grad.iter_mut().zip(r.gradient.to_flat()) {
                    *g += x;
                }
            }
            if grad.iter().any(|g| !g.is_finite()) {
                let stream = batch.iter().map(|&i| data.streams()[i].id()).collect::<Vec<_>>().join(",");
                return Err(TrainError::NonFinite { stream, token: None, detail: "non-finite gradient".into() });
            }
            clip_global_norm(&mut grad, train_config.clip_norm);
            adam.step(&mut theta, &grad, train_config);
            params = ModelParams::from_flat(config, &theta)?;
            report.steps += 1;
        }

        let val_ll = match &val_seqs {
            Some(v) => Some(total_ll(&params, config, v, workers)?),
            None => None,
        };
        report.epochs.push(EpochRecord {
            epoch,
            objective: obj_sum,
            train_ll: ll_sum,
            val_ll,
            seconds: start.map_or(0.0, |t| t.elapsed().as_secs_f64()),
        });

        if let (Some(v), Some(patience)) = (val_ll, train_config.patience) {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, params.clone()));
                report.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }

    match best {
        Some((_, p)) => Ok((p, report)),
        None => {
            report.best_epoch = report.epochs.last().map(|r| r.epoch);
            Ok((params, report))
        }
    }
}

#[cfg(test)]
mod tests;
