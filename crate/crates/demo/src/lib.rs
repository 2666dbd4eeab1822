//! Browser demo for tppkit. Each export takes plain numbers and returns a JSON
//! string for the page in `www/` to draw.

use serde_json::{json, Value};
use tppkit::eval::{attention_graph, intensity_trace};
use tppkit::model::ModelConfig;
use tppkit::pgem::{
    build_trace, exact_ll, rates_at, sample_spec, simulate, simulate_dataset, PgemConfig, PgemNode, PgemSpec,
};
use tppkit::streams::{augment, split_by_stream, EventStream};
use tppkit::train::{quadrature_ll, train, TrainConfig};
use wasm_bindgen::prelude::*;

fn spec_json(spec: &PgemSpec) -> Value {
    let nodes: Vec<Value> = spec
        .nodes()
        .iter()
        .map(|n| json!({ "parents": n.parents, "windows": n.windows, "rates": n.rates }))
        .collect();
    json!({ "labels": spec.label_count(), "nodes": nodes, "edges": spec.edges() })
}

fn truth_json(spec: &PgemSpec, stream: &EventStream) -> Result<Value, String> {
    let trace = build_trace(spec, stream).map_err(|e| e.to_string())?;
    Ok(trace
        .segments
        .iter()
        .map(|s| json!({ "start": s.start, "end": s.end, "rates": s.rates }))
        .collect())
}

fn events_json(stream: &EventStream) -> Value {
    stream.epochs().iter().map(|e| json!({ "time": e.time, "label": e.label })).collect()
}

fn sampled(labels: usize, horizon: f64, seed: u64) -> Result<(PgemSpec, EventStream), String> {
    if !(1..=8).contains(&labels) {
        return Err("labels must be between 1 and 8".into());
    }
    if !(horizon > 0.0 && horizon <= 5000.0) {
        return Err("horizon must be in (0, 5000]".into());
    }
    let spec = sample_spec(labels, seed, &PgemConfig::default()).map_err(|e| e.to_string())?;
    let stream = simulate(&spec, horizon, seed ^ 0x5EED);
    Ok((spec, stream))
}

/// Samples a random PGEM, simulates one stream and returns its events, the
/// true piecewise-constant intensities and the exact log-likelihood.
pub fn simulate_op(labels: usize, horizon: f64, seed: u64) -> Result<Value, String> {
    let (spec, stream) = sampled(labels, horizon, seed)?;
    let ll = exact_ll(&spec, &stream).map_err(|e| e.to_string())?.value();
    Ok(json!({
        "horizon": horizon,
        "spec": spec_json(&spec),
        "events": events_json(&stream),
        "segments": truth_json(&spec, &stream)?,
        "exact_ll": ll,
    }))
}

/// The quadrature log-likelihood with true rates plugged in, for each fake
/// count up to `max_fakes`, against the exact value.
pub fn quadrature_op(labels: usize, horizon: f64, seed: u64, max_fakes: usize) -> Result<Value, String> {
    let (spec, stream) = sampled(labels, horizon, seed)?;
    let exact = exact_ll(&spec, &stream).map_err(|e| e.to_string())?.value();
    let mut rows = Vec::new();
    for k in 0..=max_fakes.min(50) {
        let seq = augment(&stream, k);
        let rates: Vec<Vec<f64>> = seq.tokens()[1..]
            .iter()
            .map(|t| {
                let mut r = rates_at(&spec, &stream, t.time);
                r.push(0.0);
                r
            })
            .collect();
        let q = quadrature_ll(&seq, &rates).map_err(|e| e.to_string())?;
        rows.push(json!({ "fakes": k, "tokens": seq.len(), "quadrature": q, "rel_error": (q - exact).abs() / exact.abs() }));
    }
    Ok(json!({ "exact_ll": exact, "events": stream.len(), "rows": rows }))
}

/// Three labels where label 1 fires 20× faster within 30 time units of a
/// label-0 event.
pub fn planted_spec() -> PgemSpec {
    PgemSpec::new(vec![
        PgemNode::parentless(0.05),
        PgemNode { parents: vec![0], windows: vec![30.0], rates: vec![0.01, 0.2] },
        PgemNode::parentless(0.05),
    ])
    .expect("valid planted spec")
}

/// Trains a small model on the planted graph and returns the learning curve,
/// learned and true intensities on a held-out stream, and the attention graph.
pub fn train_op(seed: u64, epochs: usize, fakes: usize, threshold: f64) -> Result<Value, String> {
    if !(1..=200).contains(&epochs) {
        return Err("epochs must be between 1 and 200".into());
    }
    let spec = planted_spec();
    let data = simulate_dataset(&spec, 8, 400.0, seed, "planted");
    let (train_set, test_set) = split_by_stream(&data, 0.75, seed).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        channel_width: 4,
        embed_dim: 8,
        memory_depth: 3,
        fake_count: fakes.min(5),
        intensity_hidden: 16,
        ..ModelConfig::new(3)
    };
    let tc = TrainConfig { epochs, learning_rate: 0.005, seed, ..TrainConfig::default() };
    let (params, report) = train(&train_set, None, &config, &tc).map_err(|e| e.to_string())?;
    let stream = &test_set.streams()[0];
    let trace = intensity_trace(&params, &config, stream, config.fake_count).map_err(|e| e.to_string())?;
    let graph = attention_graph(&params, &config, &test_set, threshold, 1).map_err(|e| e.to_string())?;
    let curve: Vec<Value> = report.epochs.iter().map(|r| json!({ "epoch": r.epoch, "train_ll": r.train_ll })).collect();
    let points: Vec<Value> = trace
        .points
        .iter()
        .map(|p| json!({ "time": p.time, "label": p.label, "lambda": p.lambda, "real": p.is_real_event }))
        .collect();
    Ok(json!({
        "horizon": stream.horizon(),
        "curve": curve,
        "events": events_json(stream),
        "learned": points,
        "segments": truth_json(&spec, stream)?,
        "graph": serde_json::from_str::<Value>(&graph.to_json()).map_err(|e| e.to_string())?,
    }))
}

fn export(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_pgem(labels: usize, horizon: f64, seed: u64) -> Result<String, JsValue> {
    export(simulate_op(labels, horizon, seed))
}

#[wasm_bindgen]
pub fn quadrature_sweep(labels: usize, horizon: f64, seed: u64, max_fakes: usize) -> Result<String, JsValue> {
    export(quadrature_op(labels, horizon, seed, max_fakes))
}

#[wasm_bindgen]
pub fn train_planted(seed: u64, epochs: usize, fakes: usize, threshold: f64) -> Result<String, JsValue> {
    export(train_op(seed, epochs, fakes, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_is_consistent() {
        let v = simulate_op(4, 300.0, 3).unwrap();
        let segs = v["segments"].as_array().unwrap();
        assert_eq!(segs[0]["start"], 0.0);
        assert_eq!(segs.last().unwrap()["end"], 300.0);
        assert_eq!(v["spec"]["nodes"].as_array().unwrap().len(), 4);
        assert!(v["exact_ll"].as_f64().unwrap().is_finite());
        assert_eq!(simulate_op(4, 300.0, 3).unwrap(), v);
        assert!(simulate_op(0, 300.0, 3).is_err());
    }

    #[test]
    fn quadrature_converges() {
        let v = quadrature_op(3, 500.0, 2, 20).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 21);
        let last = rows.last().unwrap()["rel_error"].as_f64().unwrap();
        assert!(last < 0.01, "{last}");
        assert!(last <= rows[0]["rel_error"].as_f64().unwrap());
    }

    #[test]
    fn training_returns_all_panels() {
        let v = train_op(1, 3, 1, 0.01).unwrap();
        assert_eq!(v["curve"].as_array().unwrap().len(), 3);
        assert!(!v["learned"].as_array().unwrap().is_empty());
        assert_eq!(v["graph"]["adjacency"].as_array().unwrap().len(), 3);
        assert!(train_op(1, 0, 1, 0.01).is_err());
    }
}
