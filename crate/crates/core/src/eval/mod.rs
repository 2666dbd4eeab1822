//! Test-set scoring, attention graphs and intensity traces.

mod graph;
mod trace;

use std::path::Path;

use thiserror::Error;

use crate::model::{predict_rates, ModelConfig, ModelError, ModelParams};
use crate::par;
use crate::streams::{augment, Dataset, EventStream};
use crate::train::{quadrature_ll, TrainError};

pub use graph::{attention_graph, AttentionGraph, Edge};
pub use trace::{intensity_trace, sharpness, IntensityTrace, TracePoint};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("stream {stream} has label {label} but the model knows {labels} labels")]
    UnknownLabel { stream: String, label: usize, labels: usize },
    #[error("attention disabled: the model has memory depth 0")]
    AttentionDisabled,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })
}

/// Re-labels a stream with the model's label count, failing on labels the
/// model has never seen.
pub(crate) fn conform(stream: &EventStream, labels: usize) -> Result<EventStream, EvalError> {
    if stream.label_count() == labels {
        return Ok(stream.clone());
    }
    if let Some(e) = stream.epochs().iter().find(|e| e.label >= labels) {
        return Err(EvalError::UnknownLabel { stream: stream.id().to_string(), label: e.label, labels });
    }
    Ok(EventStream::new(stream.id(), stream.epochs().to_vec(), stream.horizon(), labels)
        .expect("labels already checked"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamLl {
    pub stream_id: String,
    pub ll: f64,
    pub num_events: usize,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlReport {
    pub streams: Vec<StreamLl>,
}

impl LlReport {
    pub fn total(&self) -> f64 {
        self.streams.iter().map(|s| s.ll).sum()
    }

    pub fn num_events(&self) -> usize {
        self.streams.iter().map(|s| s.num_events).sum()
    }

    /// CSV `stream_id,ll,num_events,horizon`, one row per stream and a final
    /// `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stream_id,ll,num_events,horizon\n");
        for s in &self.streams {
            out.push_str(&format!("{},{:?},{},{:?}\n", s.stream_id, s.ll, s.num_events, s.horizon));
        }
        let horizon: f64 = self.streams.iter().map(|s| s.horizon).sum();
        out.push_str(&format!("total,{:?},{},{:?}\n", self.total(), self.num_events(), horizon));
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EvalError> {
        write_file(path, &self.to_csv())
    }
}

/// Quadrature log-likelihood of every stream after augmenting it with
/// `fake_count` fakes. Parameters are only read.
pub fn test_ll(
    params: &ModelParams,
    config: &ModelConfig,
    data: &Dataset,
    fake_count: usize,
    workers: usize,
) -> Result<LlReport, EvalError> {
    let results = par::map(workers, data.streams(), |_, s| -> Result<StreamLl, EvalError> {
        let s = conform(s, config.label_count)?;
        let seq = augment(&s, fake_count);
        let rates = predict_rates(params, config, &seq)?;
        let ll = quadrature_ll(&seq, &rates)?;
        Ok(StreamLl { stream_id: s.id().to_string(), ll, num_events: s.len(), horizon: s.horizon() })
    });
    Ok(LlReport { streams: results.into_iter().collect::<Result<_, _>>()? })
}
