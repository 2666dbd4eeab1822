//! Acceptance run: one `criterion N PASS|FAIL` line per criterion.
//!
//! `cargo test --test acceptance -- 3 5` runs a subset. The process fails on
//! any failing criterion that is not listed in `KNOWN_RED`; a known-red
//! criterion still prints its FAIL line and metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tppkit::autodiff::Tape;
use tppkit::eval::{attention_graph, test_ll};
use tppkit::model::{forward, predict_rates, ModelConfig, ModelParams};
use tppkit::pgem::{exact_ll, rates_at, sample_spec, simulate, simulate_dataset, PgemConfig, PgemNode, PgemSpec};
use tppkit::streams::{augment, split_by_stream, AugmentedSequence, Dataset, Epoch, EventStream, TokenKind};
use tppkit::train::{quadrature_ll, sequence_gradient, train, Regularization, TrainConfig};

/// Criteria expected to fail, with the reason recorded alongside the code.
/// 4: the quadrature objective rewards λ ≈ 1/Δt at every token, so a model
/// trained on it does not settle at the homogeneous rate.
const KNOWN_RED: &[usize] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// One PGEM benchmark: M = 5, 10 streams, T = 1000, 70/30 stream split.
struct Benchmark {
    train: Dataset,
    test: Dataset,
}

impl Benchmark {
    fn new(seed: u64) -> Self {
        let spec = sample_spec(5, seed, &PgemConfig::default()).unwrap();
        let data = simulate_dataset(&spec, 10, 1000.0, 1000 + seed, "pgem");
        let (train, test) = split_by_stream(&data, 0.7, seed).unwrap();
        Self { train, test }
    }

    fn test_ll(&self, fakes: usize) -> f64 {
        let config = ModelConfig { fake_count: fakes, ..ModelConfig::new(5) };
        let tc = TrainConfig { epochs: 100, seed: 1, workers: workers(), ..TrainConfig::default() };
        let (params, _) = train(&self.train, None, &config, &tc).unwrap();
        test_ll(&params, &config, &self.test, fakes, workers()).unwrap().total()
    }
}

/// Test LL per (spec seed, K), shared by criteria 1 and 2.
#[derive(Default)]
struct LlCache(BTreeMap<(u64, usize), f64>);

impl LlCache {
    fn get(&mut self, seed: u64, fakes: usize) -> f64 {
        *self.0.entry((seed, fakes)).or_insert_with(|| Benchmark::new(seed).test_ll(fakes))
    }
}

fn criterion_1(cache: &mut LlCache) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 1..=3 {
        let (no_fake, one_fake) = (cache.get(seed, 0), cache.get(seed, 1));
        let gain = (one_fake - no_fake) / no_fake.abs();
        if gain >= 0.10 {
            wins += 1;
        }
        parts.push(format!("spec {seed}: K0 {no_fake:.1} K1 {one_fake:.1} gain {:.1}%", 100.0 * gain));
    }
    Outcome { pass: wins >= 2, detail: format!("{wins}/3 specs gain >= 10% ({})", parts.join("; ")) }
}

fn criterion_2(cache: &mut LlCache) -> Outcome {
    let ks = [0usize, 1, 2, 3, 5];
    let lls: Vec<f64> = ks.iter().map(|&k| cache.get(1, k)).collect();
    let best = (0..ks.len()).max_by(|&a, &b| lls[a].total_cmp(&lls[b])).unwrap();
    let worst = (0..ks.len()).min_by(|&a, &b| lls[a].total_cmp(&lls[b])).unwrap();
    let pass = [1, 2, 3].contains(&ks[best]) && ks[worst] == 0;
    let table: Vec<String> = ks.iter().zip(&lls).map(|(k, ll)| format!("K{k} {ll:.1}")).collect();
    Outcome { pass, detail: format!("spec 1: {}; max at K={}, min at K={}", table.join(", "), ks[best], ks[worst]) }
}

/// True rates on every gap, with a unit rate on the fake channel, which the
/// quadrature must ignore.
fn injected_rates(spec: &PgemSpec, stream: &EventStream, seq: &AugmentedSequence) -> Vec<Vec<f64>> {
    seq.tokens()[1..]
        .iter()
        .map(|t| {
            let mut r = rates_at(spec, stream, t.time);
            r.push(1.0);
            r
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let spec = sample_spec(5, 50 + i, &PgemConfig::default()).unwrap();
        let s = simulate(&spec, 1000.0, 900 + i);
        let exact = exact_ll(&spec, &s).unwrap().value();
        let seq = augment(&s, 20);
        let q = quadrature_ll(&seq, &injected_rates(&spec, &s, &seq)).unwrap();
        worst = worst.max((q - exact).abs() / exact.abs());
    }
    let mut worst_const: f64 = 0.0;
    let spec = PgemSpec::new(vec![PgemNode::parentless(0.3), PgemNode::parentless(0.02)]).unwrap();
    for seed in 0..5 {
        let s = simulate(&spec, 500.0, seed);
        let exact = exact_ll(&spec, &s).unwrap().value();
        for k in 0..=6 {
            let seq = augment(&s, k);
            let q = quadrature_ll(&seq, &injected_rates(&spec, &s, &seq)).unwrap();
            worst_const = worst_const.max((q - exact).abs());
        }
    }
    Outcome {
        pass: worst <= 0.01 && worst_const <= 1e-9,
        detail: format!(
            "K=20 worst relative error {worst:.2e} over 10 specs (<= 1e-2); constant rates worst |diff| {worst_const:.1e} for K in 0..=6 (<= 1e-9)"
        ),
    }
}

fn criterion_4() -> Outcome {
    let spec = PgemSpec::new(vec![PgemNode::parentless(0.5)]).unwrap();
    let horizon = 2000.0;
    let named = |seed: u64, id: &str| {
        EventStream::new(id, simulate(&spec, horizon, seed).epochs().to_vec(), horizon, 1).unwrap()
    };
    let train_set = Dataset::new("train", vec![named(1, "train")]).unwrap();
    let test_stream = named(101, "test");
    let config = ModelConfig::new(1);
    let tc = TrainConfig {
        epochs: 100,
        learning_rate: 0.01,
        prediction_weight: 0.0,
        weight_decay: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let (params, _) = train(&train_set, None, &config, &tc).unwrap();
    let seq = augment(&test_stream, config.fake_count);
    let rates = predict_rates(&params, &config, &seq).unwrap();
    let ll = quadrature_ll(&seq, &rates).unwrap();
    let mean = rates.iter().map(|r| r[0]).sum::<f64>() / rates.len() as f64;
    let real: Vec<f64> = seq.tokens()[1..]
        .iter()
        .zip(&rates)
        .filter(|(t, _)| t.kind == TokenKind::Real)
        .map(|(_, r)| r[0])
        .collect();
    let real_mean = real.iter().sum::<f64>() / real.len() as f64;
    let rate_hat = train_set.num_events() as f64 / horizon;
    let n = test_stream.len() as f64;
    let fit = n * rate_hat.ln() - rate_hat * horizon;
    let rate_err = (mean - 0.5).abs() / 0.5;
    let ll_err = (ll - fit).abs() / fit.abs();
    Outcome {
        pass: rate_err <= 0.10 && ll_err <= 0.05,
        detail: format!(
            "K=1: mean λ over test tokens {mean:.3} ({:.0}% off 0.5, <= 10%), over real events {real_mean:.3}; test LL {ll:.1} vs homogeneous fit {fit:.1} ({:.0}% off, <= 5%)",
            100.0 * rate_err,
            100.0 * ll_err
        ),
    }
}

fn random_config(rng: &mut ChaCha8Rng, labels: usize) -> ModelConfig {
    ModelConfig {
        channel_width: rng.random_range(1..4),
        embed_dim: rng.random_range(2..5),
        memory_depth: rng.random_range(0..4),
        fake_count: rng.random_range(0..3),
        intensity_hidden: rng.random_range(2..6),
        normalize_time: rng.random_bool(0.7),
        bank_real_only: rng.random_bool(0.3),
        ..ModelConfig::new(labels)
    }
}

fn scaled_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let flat: Vec<f64> = ModelParams::init(config, seed).unwrap().to_flat().iter().map(|v| v * scale).collect();
    ModelParams::from_flat(config, &flat).unwrap()
}

fn random_stream(rng: &mut ChaCha8Rng, labels: usize, events: usize, horizon: f64) -> EventStream {
    let mut times: Vec<f64> = (0..events).map(|_| rng.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let epochs = times.into_iter().map(|t| Epoch::new(t, rng.random_range(0..labels))).collect();
    EventStream::new("s", epochs, horizon, labels).unwrap()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for case in 0..20u64 {
        let labels = rng.random_range(1..4);
        let config = random_config(&mut rng, labels);
        // n events and K fakes per gap give at most n + 2 + K (n + 1) tokens
        let max_events = (8 - config.fake_count) / (config.fake_count + 1);
        let events = rng.random_range(0..=max_events);
        let horizon = rng.random_range(2.0..20.0);
        let s = random_stream(&mut rng, labels, events, horizon);
        let seq = augment(&s, config.fake_count);
        assert!(seq.len() <= 10);
        let params = scaled_params(&config, case, rng.random_range(0.5..2.0));
        let reg = Regularization { prediction: rng.random_range(0.0..1.0), weight_decay: rng.random_range(0.0..0.1) };
        let grad = sequence_gradient(&params, &config, reg, &seq).unwrap().gradient.to_flat();
        let flat = params.to_flat();
        let eval = |v: &[f64]| {
            let p = ModelParams::from_flat(&config, v).unwrap();
            sequence_gradient(&p, &config, reg, &seq).unwrap().objective
        };
        for j in 0..flat.len() {
            let mut up = flat.clone();
            up[j] += h;
            let mut down = flat.clone();
            down[j] -= h;
            let fd = (eval(&up) - eval(&down)) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-3));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: worst < 1e-4 && secs < 60.0,
        detail: format!(
            "20 instances, {checked} partials, worst relative error {worst:.2e} (< 1e-4, denominator floored at 1e-3), {secs:.1}s (< 60s)"
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let (mut rates_seen, mut bad_rates, mut worst_simplex): (usize, usize, f64) = (0, 0, 0.0);
    for draw in 0..10_000u64 {
        let labels = rng.random_range(1..4);
        let config = random_config(&mut rng, labels);
        let params = scaled_params(&config, draw, rng.random_range(0.1..8.0));
        let events = rng.random_range(0..5);
        let horizon = rng.random_range(0.5..500.0);
        let s = random_stream(&mut rng, labels, events, horizon);
        let seq = augment(&s, config.fake_count);
        let mut tape = Tape::new();
        let pass = forward(&mut tape, &params, &config, &seq).unwrap();
        for r in pass.rate_values(&tape).iter().flatten() {
            rates_seen += 1;
            if !(*r > 0.0 && r.is_finite()) {
                bad_rates += 1;
            }
        }
        for alpha in pass.attention.iter().flat_map(|a| &a.alpha) {
            worst_simplex = worst_simplex.max((alpha.iter().sum::<f64>() - 1.0).abs());
            if alpha.iter().any(|a| *a < 0.0) {
                worst_simplex = f64::INFINITY;
            }
        }
    }

    let mut count_misses = 0;
    for _ in 0..1000 {
        let labels = rng.random_range(1..6);
        let horizon = rng.random_range(1.0..100.0);
        let events = rng.random_range(0..40);
        let mut s = random_stream(&mut rng, labels, events, horizon);
        if rng.random_bool(0.2) {
            // events on the boundaries give zero-length gaps
            let mut e = s.epochs().to_vec();
            e.insert(0, Epoch::new(0.0, 0));
            e.push(Epoch::new(horizon, 0));
            e.dedup_by(|a, b| a.time == b.time);
            s = EventStream::new("s", e, horizon, labels).unwrap();
        }
        let k = rng.random_range(0..6);
        let mut bounds = vec![0.0];
        bounds.extend(s.epochs().iter().map(|e| e.time));
        bounds.push(horizon);
        let gaps = bounds.windows(2).filter(|w| w[1] > w[0]).count();
        if augment(&s, k).len() != s.len() + 2 + k * gaps {
            count_misses += 1;
        }
    }

    let mut causality_misses = 0;
    for case in 0..100u64 {
        let labels = rng.random_range(1..4);
        let config = random_config(&mut rng, labels);
        let params = scaled_params(&config, case, 1.5);
        let events = rng.random_range(1..10);
        let s = random_stream(&mut rng, labels, events, 20.0);
        let seq = augment(&s, config.fake_count);
        let cut = rng.random_range(1..seq.len());
        let mut tokens = seq.tokens().to_vec();
        for t in tokens.iter_mut().skip(cut) {
            if t.kind == TokenKind::Real {
                t.label = rng.random_range(0..labels);
            }
            t.time = (t.time + rng.random_range(0.0..1.0)).min(20.0);
        }
        let changed = AugmentedSequence::from_tokens(tokens, 20.0, labels);
        let a = predict_rates(&params, &config, &seq).unwrap();
        let b = predict_rates(&params, &config, &changed).unwrap();
        if a[..cut - 1] != b[..cut - 1] {
            causality_misses += 1;
        }
    }

    Outcome {
        pass: bad_rates == 0 && worst_simplex <= 1e-9 && count_misses == 0 && causality_misses == 0,
        detail: format!(
            "10^4 draws: {bad_rates}/{rates_seen} non-positive rates, worst |Σα − 1| {worst_simplex:.1e}; \
             token count formula wrong on {count_misses}/1000 streams; causality broken on {causality_misses}/100 sequences"
        ),
    }
}

fn criterion_7() -> Outcome {
    let spec = PgemSpec::new(vec![
        PgemNode::parentless(0.05),
        PgemNode { parents: vec![0], windows: vec![30.0], rates: vec![0.01, 0.2] },
        PgemNode::parentless(0.05),
    ])
    .unwrap();
    let data = simulate_dataset(&spec, 10, 1000.0, 7, "planted");
    let (train_set, test_set) = split_by_stream(&data, 0.7, 7).unwrap();
    let config = ModelConfig::new(3);
    let (mut found, mut row_max) = (0, 0);
    let mut weights = Vec::new();
    for seed in 1..=5 {
        let tc = TrainConfig { epochs: 50, seed, workers: workers(), ..TrainConfig::default() };
        let (params, _) = train(&train_set, None, &config, &tc).unwrap();
        let graph = attention_graph(&params, &config, &test_set, 0.01, workers()).unwrap();
        if graph.has_edge(0, 1) {
            found += 1;
        }
        let row = &graph.adjacency[1];
        if (0..3).filter(|&q| q != 1).all(|q| row[0] >= row[q]) {
            row_max += 1;
        }
        weights.push(format!("{:.3}", row[0]));
    }
    Outcome {
        pass: found >= 4,
        detail: format!(
            "edge 0->1 present in {found}/5 seeds (>= 4) at θ=0.01, weights [{}]; strongest non-self parent of 1 in {row_max}/5",
            weights.join(", ")
        ),
    }
}

fn cli(args: &[&str]) {
    let mut argv = vec!["tppkit"];
    argv.extend_from_slice(args);
    let code = tppkit::cli::run(argv);
    assert_eq!(code, 0, "tppkit {args:?} exited with {code}");
}

/// Bytes of a file, with the wall-clock column of a training report blanked.
fn comparable(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    if path.file_name().is_some_and(|n| n == "report.csv") {
        let text = String::from_utf8(bytes).unwrap();
        return text
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n")
            .collect::<String>()
            .into_bytes();
    }
    bytes
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |rel: &str| root.join(rel).display().to_string();
    let (data, run) = (p("data"), p("run"));
    let (csv, train_csv, test_csv, ckpt) =
        (p("data/pgem.csv"), p("data/pgem.train.csv"), p("data/pgem.test.csv"), p("run/model.bin"));
    cli(&["gen-pgem", "--labels", "3", "--streams", "8", "--horizon", "300", "--seed", "8", "--out-dir", &data]);
    cli(&["split", "--data", &csv, "--fraction", "0.75", "--seed", "2", "--out-dir", &data]);
    cli(&["split", "--data", &csv, "--by", "time", "--fraction", "0.6", "--out-dir", &p("time"), "--manifest", &p("time.json")]);
    cli(&[
        "--parallel", "2", "train", "--data", &train_csv, "--val", &test_csv, "--out-dir", &run, "--epochs", "3", "--batch", "2",
        "--patience", "5",
    ]);
    let report = ["--ckpt", ckpt.as_str(), "--data", test_csv.as_str(), "--out-dir", run.as_str()];
    cli(&[&["eval"], &report[..]].concat());
    cli(&[&["attn-graph", "--threshold", "0.02"], &report[..]].concat());
    let stream = test_stream_id(&test_csv);
    cli(&[&["trace", "--stream", stream.as_str()], &report[..]].concat());

    let manifests: Vec<PathBuf> = ["data/gen-pgem.manifest.json", "data/split.manifest.json", "time.json",
        "run/train.manifest.json", "run/eval.manifest.json", "run/attn-graph.manifest.json", "run/trace.manifest.json"]
        .iter()
        .map(|m| root.join(m))
        .collect();
    let mut checked = 0;
    let mut diffs = Vec::new();
    for manifest in &manifests {
        let text = fs::read_to_string(manifest).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        let mut files: Vec<PathBuf> =
            value["outputs"].as_array().unwrap().iter().map(|o| PathBuf::from(o.as_str().unwrap())).collect();
        let before: Vec<Vec<u8>> = files.iter().map(|f| comparable(f)).collect();
        for f in &files {
            fs::remove_file(f).unwrap();
        }
        files.push(manifest.clone());
        let before = [before, vec![comparable(manifest)]].concat();
        cli(&["rerun", &manifest.display().to_string()]);
        for (f, old) in files.iter().zip(&before) {
            checked += 1;
            if !f.exists() || &comparable(f) != old {
                diffs.push(f.strip_prefix(root).unwrap_or(f).display().to_string());
            }
        }
    }
    Outcome {
        pass: diffs.is_empty() && manifests.len() == 7,
        detail: format!(
            "6 subcommands, 7 manifests rerun, {checked} files compared, {} differ{}",
            diffs.len(),
            if diffs.is_empty() { String::new() } else { format!(": {}", diffs.join(", ")) }
        ),
    }
}

fn test_stream_id(csv: &str) -> String {
    tppkit::streams::load_dataset(Path::new(csv)).unwrap().streams().last().unwrap().id().to_string()
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut cache = LlCache::default();
    let mut unexpected = Vec::new();
    let mut failed = 0;
    let mut ran = 0;
    for n in 1..=8 {
        if !selected(n) {
            continue;
        }
        let start = Instant::now();
        let outcome = match n {
            1 => criterion_1(&mut cache),
            2 => criterion_2(&mut cache),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            _ => criterion_8(),
        };
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        let note = match (outcome.pass, KNOWN_RED.contains(&n)) {
            (false, true) => " [known red]",
            (true, true) => " [listed as known red but passed]",
            _ => "",
        };
        println!("criterion {n} {verdict}: {} ({:.1}s){note}", outcome.detail, start.elapsed().as_secs_f64());
        ran += 1;
        if !outcome.pass {
            failed += 1;
            if !KNOWN_RED.contains(&n) {
                unexpected.push(n);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria pass, {failed} fail ({} unexpected)", ran - failed, unexpected.len());
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
