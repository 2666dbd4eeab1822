//! CSV stream files with a JSON metadata sidecar.
//!
//! `data.csv` holds rows `stream_id,time,label`; `data.meta.json` holds
//! `{"num_labels": M, "horizon": T, "label_names": [...], "streams": [...]}`.
//! `label_names` and `streams` are optional. When present, `streams` fixes
//! stream order and keeps streams without any events.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Epoch, EventStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub num_labels: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streams: Option<Vec<String>>,
}

/// `dir/name.csv` → `dir/name.meta.json`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub fn load_dataset(csv_path: &Path) -> Result<Dataset, DataError> {
    let meta_path = metadata_path(csv_path);
    if !meta_path.exists() {
        return Err(DataError::MissingMetadata(meta_path.display().to_string()));
    }
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Metadata = serde_json::from_str(&meta_text)
        .map_err(|source| DataError::Metadata { path: meta_path.display().to_string(), source })?;
    if !meta.horizon.is_finite() || meta.horizon < 0.0 {
        return Err(DataError::BadHorizon(meta.horizon));
    }
    let display = csv_path.display().to_string();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| DataError::Csv { path: display.clone(), message: e.to_string() })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv { path: display.clone(), message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["stream_id", "time", "label"] {
        return Err(DataError::Row {
            path: display,
            line: 1,
            message: format!("expected header 'stream_id,time,label', found '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut order: Vec<String> = meta.streams.clone().unwrap_or_default();
    let mut rows: HashMap<String, Vec<(Epoch, u64)>> =
        order.iter().map(|id| (id.clone(), Vec::new())).collect();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::Row { path: display.clone(), line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| DataError::Row { path: display.clone(), line, message };
        if record.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(bad("empty stream_id".into()));
        }
        let time: f64 = record[1].parse().map_err(|_| bad(format!("bad time '{}'", &record[1])))?;
        let label: usize = record[2].parse().map_err(|_| bad(format!("bad label '{}'", &record[2])))?;
        if label >= meta.num_labels {
            return Err(bad(format!("label {label} >= num_labels {}", meta.num_labels)));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(bad(format!("time {time} must be finite and non-negative")));
        }
        if time > meta.horizon {
            return Err(bad(format!("time {time} exceeds horizon {}", meta.horizon)));
        }
        rows.entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push((Epoch::new(time, label), line));
    }

    let mut streams = Vec::with_capacity(order.len());
    for id in order {
        let mut epochs = rows.remove(&id).unwrap_or_default();
        epochs.sort_by(|a, b| a.0.time.total_cmp(&b.0.time));
        for w in epochs.windows(2) {
            if w[0].0.time == w[1].0.time {
                return Err(DataError::DuplicateTime {
                    stream: id,
                    time: w[1].0.time,
                    line: w[0].1.max(w[1].1),
                });
            }
        }
        let epochs = epochs.into_iter().map(|(e, _)| e).collect();
        streams.push(EventStream::new(id, epochs, meta.horizon, meta.num_labels)?);
    }
    if streams.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let name = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset::new(name, streams)?.with_label_names(meta.label_names))
}

/// Writes `csv_path` and its sidecar. Times use the shortest decimal form
/// that parses back to the same `f64`.
pub fn save_dataset(dataset: &Dataset, csv_path: &Path) -> Result<(), DataError> {
    let mut out = String::from("stream_id,time,label\n");
    for s in dataset.streams() {
        for e in s.epochs() {
            out.push_str(&format!("{},{:?},{}\n", s.id(), e.time, e.label));
        }
    }
    write_file(csv_path, out.as_bytes())?;
    let meta = Metadata {
        num_labels: dataset.label_count(),
        horizon: dataset.horizon(),
        label_names: dataset.label_names().map(<[String]>::to_vec),
        streams: Some(dataset.streams().iter().map(|s| s.id().to_string()).collect()),
    };
    let meta_path = metadata_path(csv_path);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    write_file(&meta_path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, csv: &str, meta: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, csv).unwrap();
        fs::write(metadata_path(&p), meta).unwrap();
        p
    }

    #[test]
    fn loads_minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "stream_id,time,label\ns0,1.0,0\ns0,3.0,1\n", r#"{"num_labels":2,"horizon":4}"#);
        let d = load_dataset(&p).unwrap();
        assert_eq!(d.streams().len(), 1);
        assert_eq!(d.streams()[0].epochs(), &[Epoch::new(1.0, 0), Epoch::new(3.0, 1)]);
        assert_eq!(d.horizon(), 4.0);
    }

    #[test]
    fn sorts_unordered_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "stream_id,time,label\ns0,3.0,1\ns0,1.0,0\n", r#"{"num_labels":2,"horizon":4}"#);
        let d = load_dataset(&p).unwrap();
        assert_eq!(d.streams()[0].epochs()[0].time, 1.0);
    }

    #[test]
    fn duplicate_timestamp_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "stream_id,time,label\ns0,2.0,0\ns0,2.0,1\n", r#"{"num_labels":2,"horizon":4}"#);
        let err = load_dataset(&p).unwrap_err();
        assert!(err.to_string().contains("duplicate timestamp"), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let meta = r#"{"num_labels":2,"horizon":4}"#;
        let cases = [
            ("stream_id,time,label\ns0,1.0,0\ns0,2.0,5\n", "line 3"),
            ("stream_id,time,label\ns0,9.0,0\n", "line 2"),
            ("stream_id,time,label\ns0,abc,0\n", "line 2"),
            ("stream_id,time,label\ns0,1.0\n", "line 2"),
        ];
        for (csv, want) in cases {
            let p = write(dir.path(), "bad.csv", csv, meta);
            let err = load_dataset(&p).unwrap_err().to_string();
            assert!(err.contains(want), "{err}");
        }
    }

    #[test]
    fn missing_sidecar_names_expected_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.csv");
        fs::write(&p, "stream_id,time,label\n").unwrap();
        let err = load_dataset(&p).unwrap_err().to_string();
        assert!(err.contains("train.meta.json"), "{err}");
    }

    #[test]
    fn save_then_load_keeps_empty_streams_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let s1 = EventStream::new("z", vec![Epoch::new(0.1 + 0.2, 1)], 5.0, 2).unwrap();
        let s2 = EventStream::new("a", vec![], 5.0, 2).unwrap();
        let d = Dataset::new("d", vec![s1, s2]).unwrap();
        let p = dir.path().join("d.csv");
        save_dataset(&d, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back.streams(), d.streams());
    }
}
