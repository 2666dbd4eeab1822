//! Multivariate event streams.
//!
//! An [`EventStream`] is a strictly time-ordered list of labelled epochs on
//! `[0, T]`. A [`Dataset`] groups streams that share the label alphabet and
//! horizon. [`augment`] interleaves fake epochs and sentinels to build the
//! token sequence the model consumes.

mod augment;
mod io;
mod split;

use thiserror::Error;

pub use augment::{augment, AugmentedSequence, Token, TokenKind};
pub use io::{load_dataset, metadata_path, save_dataset, Metadata};
pub use split::{split_by_stream, split_by_time};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: line {line}: {message}")]
    Row { path: String, line: u64, message: String },
    #[error("duplicate timestamp {time} in stream '{stream}' (line {line})")]
    DuplicateTime { stream: String, time: f64, line: u64 },
    #[error("label {label} out of range for {label_count} labels")]
    LabelOutOfRange { label: usize, label_count: usize },
    #[error("epoch time {time} outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },
    #[error("epoch times must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("invalid horizon {0}")]
    BadHorizon(f64),
    #[error("dataset has no streams")]
    EmptyDataset,
    #[error("stream '{stream}' disagrees with the dataset on {what}")]
    Inconsistent { stream: String, what: &'static str },
    #[error("split fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("split by stream needs at least 2 streams, found {0}; use split_by_time for single-stream data")]
    TooFewStreams(usize),
    #[error("missing metadata sidecar: expected {0}")]
    MissingMetadata(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: bad metadata: {source}")]
    Metadata { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

/// One event arrival.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Epoch {
    pub time: f64,
    pub label: usize,
}

impl Epoch {
    pub fn new(time: f64, label: usize) -> Self {
        Self { time, label }
    }
}

/// Time-ordered epochs on `[0, horizon]` over `label_count` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    id: String,
    epochs: Vec<Epoch>,
    horizon: f64,
    label_count: usize,
}

impl EventStream {
    pub fn new(
        id: impl Into<String>,
        epochs: Vec<Epoch>,
        horizon: f64,
        label_count: usize,
    ) -> Result<Self, DataError> {
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(DataError::BadHorizon(horizon));
        }
        for e in &epochs {
            if e.label >= label_count {
                return Err(DataError::LabelOutOfRange { label: e.label, label_count });
            }
            if !e.time.is_finite() || e.time < 0.0 || e.time > horizon {
                return Err(DataError::TimeOutOfRange { time: e.time, horizon });
            }
        }
        for w in epochs.windows(2) {
            if w[0].time >= w[1].time {
                return Err(DataError::NotIncreasing { prev: w[0].time, next: w[1].time });
            }
        }
        Ok(Self { id: id.into(), epochs, horizon, label_count })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Number of events per label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_count];
        for e in &self.epochs {
            counts[e.label] += 1;
        }
        counts
    }
}

/// Streams sharing one label alphabet and one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    streams: Vec<EventStream>,
    label_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, streams: Vec<EventStream>) -> Result<Self, DataError> {
        let first = streams.first().ok_or(DataError::EmptyDataset)?;
        let (m, t) = (first.label_count, first.horizon);
        for s in &streams {
            if s.label_count != m {
                return Err(DataError::Inconsistent { stream: s.id.clone(), what: "label count" });
            }
            if s.horizon != t {
                return Err(DataError::Inconsistent { stream: s.id.clone(), what: "horizon" });
            }
        }
        Ok(Self { name: name.into(), streams, label_names: None })
    }

    pub fn with_label_names(mut self, names: Option<Vec<String>>) -> Self {
        self.label_names = names;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn streams(&self) -> &[EventStream] {
        &self.streams
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    pub fn label_count(&self) -> usize {
        self.streams[0].label_count
    }

    pub fn horizon(&self) -> f64 {
        self.streams[0].horizon
    }

    pub fn num_events(&self) -> usize {
        self.streams.iter().map(EventStream::len).sum()
    }

    pub fn stream(&self, id: &str) -> Option<&EventStream> {
        self.streams.iter().find(|s| s.id == id)
    }
}
