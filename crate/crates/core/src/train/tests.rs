use super::*;
use crate::autodiff::Tensor;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::streams::{augment, Epoch, EventStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn const_rates(seq: &AugmentedSequence, value: f64) -> Vec<Vec<f64>> {
    vec![vec![value; seq.label_count() + 1]; seq.len() - 1]
}

fn poisson_pair() -> EventStream {
    EventStream::new("s", vec![Epoch::new(2.0, 0), Epoch::new(5.0, 0)], 10.0, 1).unwrap()
}

fn toy_config(labels: usize) -> ModelConfig {
    ModelConfig {
        label_count: labels,
        channel_width: 2,
        embed_dim: 3,
        memory_depth: 2,
        fake_count: 1,
        intensity_hidden: 4,
        ..ModelConfig::default()
    }
}

fn toy_stream(labels: usize, seed: u64, events: usize) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..events).map(|_| rng.random_range(0.1..9.9)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let epochs = times.into_iter().map(|t| Epoch::new(t, rng.random_range(0..labels))).collect();
    EventStream::new("toy", epochs, 10.0, labels).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn homogeneous_closed_form() {
    let want = 2.0 * 0.1f64.ln() - 0.1 * 10.0;
    for k in [0, 1, 3, 7] {
        let seq = augment(&poisson_pair(), k);
        let ll = quadrature_ll(&seq, &const_rates(&seq, 0.1)).unwrap();
        assert!((ll - want).abs() < 1e-12, "K={k}: {ll}");
    }
    assert!((want - -5.605170).abs() < 1e-6);
}

#[test]
fn fake_channel_never_enters_ll() {
    let seq = augment(&poisson_pair(), 2);
    let mut rates = const_rates(&seq, 0.1);
    let base = quadrature_ll(&seq, &rates).unwrap();
    rates.iter_mut().for_each(|r| r[1] = 50.0);
    assert_eq!(quadrature_ll(&seq, &rates).unwrap(), base);
}

#[test]
fn non_positive_rate_at_event_is_error() {
    let seq = augment(&poisson_pair(), 0);
    let mut rates = const_rates(&seq, 0.1);
    rates[0][0] = 0.0;
    assert!(matches!(quadrature_ll(&seq, &rates), Err(TrainError::NonPositiveRate { token: 1, .. })));
    assert!(matches!(quadrature_ll(&seq, &rates[1..]), Err(TrainError::Alignment { .. })));
}

#[test]
fn tape_ll_matches_plain() {
    let config = toy_config(3);
    let params = ModelParams::init(&config, 5).unwrap();
    let seq = augment(&toy_stream(3, 1, 6), 2);
    let mut tape = Tape::new();
    let pass = forward(&mut tape, &params, &config, &seq).unwrap();
    let node = quadrature_ll_node(&mut tape, &seq, &pass.rates).unwrap();
    let plain = quadrature_ll(&seq, &pass.rate_values(&tape)).unwrap();
    assert!((tape.value(node).item() - plain).abs() < 1e-12);
}

#[test]
fn uniform_rates_give_log_channels() {
    let seq = augment(&toy_stream(4, 2, 5), 1);
    let loss = prediction_loss(&seq, &const_rates(&seq, 0.7)).unwrap();
    assert!((loss - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn dominant_true_channel_drives_loss_to_zero() {
    let seq = augment(&toy_stream(2, 3, 4), 1);
    let mut rates = const_rates(&seq, 0.1);
    for (i, tok) in seq.tokens().iter().enumerate().skip(1) {
        rates[i - 1][tok.label.min(2)] = 80.0;
    }
    assert!(prediction_loss(&seq, &rates).unwrap() < 1e-30);
}

#[test]
fn prediction_loss_matches_scalar_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let labels = 1 + case % 4;
        let seq = augment(&toy_stream(labels, case as u64, 6), case % 3);
        let rates: Vec<Vec<f64>> =
            (1..seq.len()).map(|_| (0..=labels).map(|_| rng.random_range(0.01..5.0)).collect()).collect();
        // direct softmax then log, no shifting
        let mut total = 0.0;
        let mut n = 0;
        for (i, tok) in seq.tokens().iter().enumerate().skip(1) {
            if tok.kind == TokenKind::Eos {
                continue;
            }
            let z: f64 = rates[i - 1].iter().map(|v| v.exp()).sum();
            total -= (rates[i - 1][tok.label].exp() / z).ln();
            n += 1;
        }
        let want = total / n as f64;
        let got = prediction_loss(&seq, &rates).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");

        let mut tape = Tape::new();
        let nodes: Vec<_> = rates.iter().map(|r| tape.leaf(Tensor::vector(r.clone()))).collect();
        let node = prediction_loss_node(&mut tape, &seq, &nodes).unwrap();
        assert!((tape.value(node).item() - want).abs() < 1e-12);
    }
}

use crate::streams::TokenKind;

#[test]
fn weight_penalty_arithmetic() {
    let mut config = toy_config(1);
    config.intensity_hidden = 2;
    let mut params = ModelParams::zeros(&config);
    assert_eq!(weight_penalty(&params), 0.0);
    params.f2_weight = Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap();
    params.f2_bias = Tensor::vector(vec![100.0]);
    assert_eq!(weight_penalty(&params), 25.0);
}

#[test]
fn weight_penalty_gradient_is_twice_weights() {
    let config = toy_config(2);
    let params = ModelParams::init(&config, 3).unwrap();
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape);
    let pen = weight_penalty_node(&mut tape, &nodes).unwrap();
    tape.backward(pen).unwrap();
    let g = nodes.gradients(&tape);
    for (gw, w) in g.f1_weight.data().iter().zip(params.f1_weight.data()) {
        assert_eq!(*gw, 2.0 * w);
    }
    assert!(g.f1_bias.data().iter().all(|v| *v == 0.0));
    let h = 1e-5;
    for j in 0..params.f2_weight.len() {
        let mut p = params.clone();
        p.f2_weight.data_mut()[j] += h;
        let up = weight_penalty(&p);
        p.f2_weight.data_mut()[j] -= 2.0 * h;
        let down = weight_penalty(&p);
        assert!(rel_err((up - down) / (2.0 * h), g.f2_weight.data()[j]) < 1e-6);
    }
}

fn objective_value(params: &ModelParams, config: &ModelConfig, reg: Regularization, seq: &AugmentedSequence) -> f64 {
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape);
    let out = objective(&mut tape, &nodes, config, reg, seq).unwrap();
    tape.value(out.objective).item()
}

#[test]
fn objective_without_regularization_is_ll() {
    let config = toy_config(2);
    let params = ModelParams::init(&config, 8).unwrap();
    let seq = augment(&toy_stream(2, 4, 5), 1);
    let value = objective_value(&params, &config, Regularization::NONE, &seq);
    let ll = quadrature_ll(&seq, &predict_rates(&params, &config, &seq).unwrap()).unwrap();
    assert_eq!(value, ll);
}

#[test]
fn objective_decreases_in_weight_decay() {
    let config = toy_config(2);
    let params = ModelParams::init(&config, 8).unwrap();
    let seq = augment(&toy_stream(2, 4, 5), 1);
    let values: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
        .iter()
        .map(|&w| objective_value(&params, &config, Regularization { prediction: 1.0, weight_decay: w }, &seq))
        .collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let config = toy_config(2);
    let reg = Regularization { prediction: 0.7, weight_decay: 0.05 };
    let params = ModelParams::init(&config, 21).unwrap();
    let seq = augment(&toy_stream(2, 9, 4), 1);
    let grad = sequence_gradient(&params, &config, reg, &seq).unwrap().gradient.to_flat();
    let theta = params.to_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let mut t = theta.clone();
        t[j] += h;
        let up = objective_value(&ModelParams::from_flat(&config, &t).unwrap(), &config, reg, &seq);
        t[j] -= 2.0 * h;
        let down = objective_value(&ModelParams::from_flat(&config, &t).unwrap(), &config, reg, &seq);
        worst = worst.max(rel_err((up - down) / (2.0 * h), grad[j]));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn clip_rescales_only_large_gradients() {
    let mut g = vec![3.0, 4.0];
    assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
    assert_eq!(g, vec![3.0, 4.0]);
    clip_global_norm(&mut g, 1.0);
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
}

fn toy_dataset(labels: usize, streams: usize) -> Dataset {
    let s = (0..streams)
        .map(|i| {
            let base = toy_stream(labels, 40 + i as u64, 8);
            EventStream::new(format!("s{i}"), base.epochs().to_vec(), base.horizon(), labels).unwrap()
        })
        .collect();
    Dataset::new("toy", s).unwrap()
}

#[test]
fn training_is_deterministic_across_workers() {
    let config = toy_config(2);
    let data = toy_dataset(2, 4);
    let mut tc = TrainConfig { epochs: 3, batch_size: 2, seed: 5, ..TrainConfig::default() };
    let (a, ra) = train(&data, Some(&data), &config, &tc).unwrap();
    tc.workers = 3;
    let (b, rb) = train(&data, Some(&data), &config, &tc).unwrap();
    assert_eq!(a.to_flat(), b.to_flat());
    assert_eq!(ra.epochs.len(), 3);
    for (x, y) in ra.epochs.iter().zip(&rb.epochs) {
        assert_eq!((x.objective, x.train_ll, x.val_ll), (y.objective, y.train_ll, y.val_ll));
    }
}

#[test]
fn objective_rises_on_small_toy() {
    let config = toy_config(1);
    let data = toy_dataset(1, 1);
    let tc = TrainConfig { epochs: 30, seed: 2, ..TrainConfig::default() };
    let (_, report) = train(&data, None, &config, &tc).unwrap();
    let obj: Vec<f64> = report.epochs.iter().map(|r| r.objective).collect();
    for w in obj.windows(2) {
        assert!(w[1] >= w[0] - 0.01 * w[0].abs(), "{obj:?}");
    }
    assert!(obj.last().unwrap() > obj.first().unwrap());
}

#[test]
fn early_stopping_returns_best_epoch() {
    let config = toy_config(2);
    let data = toy_dataset(2, 3);
    let tc = TrainConfig { epochs: 6, learning_rate: 0.05, patience: Some(1), seed: 1, ..TrainConfig::default() };
    let (params, report) = train(&data, Some(&data), &config, &tc).unwrap();
    let best = report.best_epoch.unwrap();
    let best_val = report.epochs[best - 1].val_ll.unwrap();
    assert!(report.epochs.iter().all(|r| r.val_ll.unwrap() <= best_val));
    let seqs: Vec<_> = data.streams().iter().map(|s| augment(s, 1)).collect();
    let ll: f64 = seqs.iter().map(|s| quadrature_ll(s, &predict_rates(&params, &config, s).unwrap()).unwrap()).sum();
    assert_eq!(ll, best_val);
}

#[test]
fn report_csv_layout() {
    let report = TrainReport {
        epochs: vec![EpochRecord { epoch: 1, objective: -2.5, train_ll: -2.0, val_ll: None, seconds: 0.25 }],
        best_epoch: Some(1),
        steps: 1,
    };
    assert_eq!(report.to_csv(), "epoch,objective,train_ll,val_ll,seconds\n1,-2.5,-2.0,,0.250\n");
}

#[test]
fn rejects_bad_configs() {
    let config = toy_config(2);
    let data = toy_dataset(2, 2);
    let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
    assert!(matches!(train(&data, None, &config, &bad), Err(TrainError::Config(_))));
    let other = toy_config(3);
    assert!(matches!(train(&data, None, &other, &TrainConfig::default()), Err(TrainError::Model(_))));
}

#[test]
fn diagnostic_names_stream_and_token() {
    let config = toy_config(1);
    let data = toy_dataset(1, 2);
    let mut params = ModelParams::init(&config, 1).unwrap();
    params.f2_bias = Tensor::vector(vec![f64::MAX]);
    params.f2_weight.data_mut().iter_mut().for_each(|w| *w = f64::MAX);
    let err = train_from(params, &data, None, &config, &TrainConfig { epochs: 1, ..TrainConfig::default() })
        .unwrap_err();
    match err {
        TrainError::NonFinite { stream, token, .. } => {
            assert!(stream.starts_with('s'));
            assert_eq!(token, Some(1));
        }
        other => panic!("unexpected {other}"),
    }
}
