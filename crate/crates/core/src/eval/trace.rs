use std::path::Path;

use super::{conform, write_file, EvalError};
use crate::model::{predict_rates, ModelConfig, ModelParams};
use crate::streams::{augment, EventStream, TokenKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub time: f64,
    pub label: usize,
    pub lambda: f64,
    /// The token at `time` is a real event of `label`.
    pub is_real_event: bool,
    pub kind: TokenKind,
}

/// Rates of every real label at every augmented token time after the start.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityTrace {
    pub stream_id: String,
    pub points: Vec<TracePoint>,
}

impl IntensityTrace {
    /// CSV `time,label,lambda,is_real_event`, with the marker written as 0 or 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,label,lambda,is_real_event\n");
        for p in &self.points {
            out.push_str(&format!("{:?},{},{:?},{}\n", p.time, p.label, p.lambda, u8::from(p.is_real_event)));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EvalError> {
        write_file(path, &self.to_csv())
    }
}

pub fn intensity_trace(
    params: &ModelParams,
    config: &ModelConfig,
    stream: &EventStream,
    fake_count: usize,
) -> Result<IntensityTrace, EvalError> {
    let stream = conform(stream, config.label_count)?;
    let seq = augment(&stream, fake_count);
    let rates = predict_rates(params, config, &seq)?;
    let mut points = Vec::with_capacity(rates.len() * config.label_count);
    for (tok, r) in seq.tokens()[1..].iter().zip(&rates) {
        for (label, &lambda) in r[..config.label_count].iter().enumerate() {
            let is_real_event = tok.kind == TokenKind::Real && tok.label == label;
            points.push(TracePoint { time: tok.time, label, lambda, is_real_event, kind: tok.kind });
        }
    }
    Ok(IntensityTrace { stream_id: stream.id().to_string(), points })
}

/// Mean rate of the occurring label at real events divided by the mean rate
/// over all real labels at fake epochs. `None` without events or fakes.
pub fn sharpness(trace: &IntensityTrace) -> Option<f64> {
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        (n > 0).then(|| s / n as f64)
    };
    let at_events = mean(&mut trace.points.iter().filter(|p| p.is_real_event).map(|p| p.lambda))?;
    let at_fakes = mean(&mut trace.points.iter().filter(|p| p.kind == TokenKind::Fake).map(|p| p.lambda))?;
    Some(at_events / at_fakes)
}
