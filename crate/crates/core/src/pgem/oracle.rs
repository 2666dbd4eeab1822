//! Exact log-likelihood of a stream under a PGEM.
//!
//! Intensities are piecewise constant, so the compensator integral is a
//! finite sum over the segments between change points.

use super::{PgemError, PgemSpec};
use crate::streams::EventStream;

/// A maximal interval on which every label's rate is constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub rates: Vec<f64>,
}

impl Segment {
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Segments tiling `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangePointTrace {
    pub segments: Vec<Segment>,
}

impl ChangePointTrace {
    /// `∫₀ᵀ Σₖ λₖ(τ) dτ`.
    pub fn integral(&self) -> f64 {
        self.segments.iter().map(|s| (s.end - s.start) * s.total_rate()).sum()
    }

    /// Interior break points.
    pub fn breaks(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }
}

/// Exact log-likelihood, or the index of the first event observed where its
/// own rate is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExactLl {
    Finite(f64),
    Impossible { event: usize },
}

impl ExactLl {
    /// The value as an `f64`, with `Impossible` mapped to `-inf`.
    pub fn value(self) -> f64 {
        match self {
            ExactLl::Finite(v) => v,
            ExactLl::Impossible { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExactLl::Finite(v) => Some(v),
            ExactLl::Impossible { .. } => None,
        }
    }
}

/// Per-label event times, for strict-history window queries.
struct History {
    times: Vec<Vec<f64>>,
}

impl History {
    fn new(stream: &EventStream) -> Self {
        let mut times = vec![Vec::new(); stream.label_count()];
        for e in stream.epochs() {
            times[e.label].push(e.time);
        }
        Self { times }
    }

    /// Whether `label` fired at least once in `[t − window, t)`.
    fn active(&self, label: usize, window: f64, t: f64) -> bool {
        let ts = &self.times[label];
        let before = ts.partition_point(|&x| x < t);
        before > 0 && ts[before - 1] >= t - window
    }
}

fn rates_from(spec: &PgemSpec, history: &History, t: f64) -> Vec<f64> {
    spec.nodes()
        .iter()
        .map(|node| {
            let mask = node
                .parents
                .iter()
                .zip(&node.windows)
                .enumerate()
                .filter(|(_, (&p, &w))| history.active(p, w, t))
                .fold(0usize, |acc, (i, _)| acc | 1 << i);
            node.rates[mask]
        })
        .collect()
}

/// Every label's rate at `t` given the events of `stream` strictly before `t`.
pub fn rates_at(spec: &PgemSpec, stream: &EventStream, t: f64) -> Vec<f64> {
    rates_from(spec, &History::new(stream), t)
}

fn check_labels(spec: &PgemSpec, stream: &EventStream) -> Result<(), PgemError> {
    if spec.label_count() != stream.label_count() {
        return Err(PgemError::LabelMismatch { stream: stream.label_count(), model: spec.label_count() });
    }
    Ok(())
}

/// Splits `[0, T]` at every event time and at every `event + window` expiry of
/// a parent edge that falls inside the horizon.
pub fn build_trace(spec: &PgemSpec, stream: &EventStream) -> Result<ChangePointTrace, PgemError> {
    check_labels(spec, stream)?;
    let horizon = stream.horizon();
    let mut windows_of: Vec<Vec<f64>> = vec![Vec::new(); spec.label_count()];
    for node in spec.nodes() {
        for (&p, &w) in node.parents.iter().zip(&node.windows) {
            windows_of[p].push(w);
        }
    }
    let mut points = vec![0.0, horizon];
    for e in stream.epochs() {
        points.push(e.time);
        for &w in &windows_of[e.label] {
            if e.time + w < horizon {
                points.push(e.time + w);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let history = History::new(stream);
    let segments = points
        .windows(2)
        .map(|p| Segment { start: p[0], end: p[1], rates: rates_from(spec, &history, 0.5 * (p[0] + p[1])) })
        .collect::<Vec<_>>();
    let segments = if segments.is_empty() {
        vec![Segment { start: 0.0, end: horizon, rates: rates_from(spec, &history, 0.0) }]
    } else {
        segments
    };
    Ok(ChangePointTrace { segments })
}

/// `Σᵢ log λ^{lᵢ}(tᵢ) − ∫₀ᵀ Σₖ λᵏ(τ) dτ`.
pub fn exact_ll(spec: &PgemSpec, stream: &EventStream) -> Result<ExactLl, PgemError> {
    let trace = build_trace(spec, stream)?;
    let history = History::new(stream);
    let mut log_term = 0.0;
    for (i, e) in stream.epochs().iter().enumerate() {
        let rate = rates_from(spec, &history, e.time)[e.label];
        if rate <= 0.0 {
            return Ok(ExactLl::Impossible { event: i });
        }
        log_term += rate.ln();
    }
    Ok(ExactLl::Finite(log_term - trace.integral()))
}
