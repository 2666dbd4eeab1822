//! Resolved per-command settings and the layering of defaults, config file,
//! environment and flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::ModelConfig;
use crate::pgem::PgemConfig;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "TPPKIT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub labels: usize,
    pub streams: usize,
    pub horizon: f64,
    pub seed: u64,
    pub name: String,
    pub out_dir: PathBuf,
    pub generator: PgemConfig,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            labels: 5,
            streams: 10,
            horizon: 1000.0,
            seed: 0,
            name: "pgem".into(),
            out_dir: ".".into(),
            generator: PgemConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Whole streams go to one side.
    Stream,
    /// Every stream is cut at the same time.
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub data: PathBuf,
    pub by: SplitMode,
    pub fraction: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self { data: PathBuf::new(), by: SplitMode::Stream, fraction: 0.7, seed: 0, out_dir: ".".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: PathBuf,
    pub validation: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            validation: None,
            seed: 0,
            out_dir: ".".into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Shared by `eval`, `attn-graph` and `trace`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Fakes per gap; the checkpoint's value when absent.
    pub fakes: Option<usize>,
    pub threshold: f64,
    /// Stream to trace; the first one when absent.
    pub stream: Option<String>,
    pub out_dir: PathBuf,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            data: PathBuf::new(),
            fakes: None,
            threshold: 0.01,
            stream: None,
            out_dir: ".".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "settings", rename_all = "kebab-case")]
pub enum Job {
    GenPgem(GenSettings),
    Split(SplitSettings),
    Train(TrainSettings),
    Eval(ReportSettings),
    AttnGraph(ReportSettings),
    Trace(ReportSettings),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::GenPgem(_) => "gen-pgem",
            Job::Split(_) => "split",
            Job::Train(_) => "train",
            Job::Eval(_) => "eval",
            Job::AttnGraph(_) => "attn-graph",
            Job::Trace(_) => "trace",
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Job::GenPgem(s) => &s.out_dir,
            Job::Split(s) => &s.out_dir,
            Job::Train(s) => &s.out_dir,
            Job::Eval(s) | Job::AttnGraph(s) | Job::Trace(s) => &s.out_dir,
        }
    }

    /// Files the job writes, besides its manifest.
    pub fn outputs(&self) -> Vec<PathBuf> {
        let dir = self.out_dir();
        let names: Vec<String> = match self {
            Job::GenPgem(s) => vec!["spec.json".into(), format!("{}.csv", s.name), format!("{}.meta.json", s.name)],
            Job::Split(s) => {
                let stem = s.data.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
                vec![
                    format!("{stem}.train.csv"),
                    format!("{stem}.train.meta.json"),
                    format!("{stem}.test.csv"),
                    format!("{stem}.test.meta.json"),
                ]
            }
            Job::Train(_) => vec!["model.bin".into(), "report.csv".into()],
            Job::Eval(_) => vec!["ll.csv".into()],
            Job::AttnGraph(_) => vec!["attention.dot".into(), "attention.json".into()],
            Job::Trace(_) => vec!["trace.csv".into()],
        };
        names.into_iter().map(|n| dir.join(n)).collect()
    }
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub parallel: usize,
    #[serde(flatten)]
    pub job: Job,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(job: Job, parallel: usize) -> Self {
        let outputs = job.outputs();
        Self { tool: "tppkit".into(), version: env!("CARGO_PKG_VERSION").into(), parallel, job, outputs }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Recursively overlays `top` on `base`. Objects merge key by key; anything
/// else replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads the optional config file. Its top level may carry `seed` and
/// `parallel`, plus one object per command name.
pub fn read_config(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else { return Ok(Value::Object(Map::new())) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if !value.is_object() {
        bail!("config {} must hold a JSON object", path.display());
    }
    Ok(value)
}

/// Defaults, then `TPPKIT_SEED`, then the config file's top-level seed, then
/// its command section, then flags.
pub fn resolve<T>(command: &str, file: &Value, flags: Value, seeded: bool) -> Result<T>
where
    T: Default + Serialize + serde::de::DeserializeOwned,
{
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    if seeded {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw.trim().parse().with_context(|| format!("{SEED_ENV}={raw:?} is not a seed"))?;
            merge(&mut value, serde_json::json!({ "seed": seed }));
        }
        if let Some(seed) = file.get("seed") {
            merge(&mut value, serde_json::json!({ "seed": seed }));
        }
    }
    if let Some(section) = file.get(command) {
        merge(&mut value, section.clone());
    }
    merge(&mut value, flags);
    serde_json::from_value(value).with_context(|| format!("invalid settings for {command}"))
}

/// Builds a JSON object from the flags that were actually given.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<V: Serialize>(mut self, path: &str, value: Option<V>) -> Self {
        if let Some(v) = value {
            let mut slot = &mut self.0;
            let mut parts = path.split('.').peekable();
            while let Some(part) = parts.next() {
                if parts.peek().is_none() {
                    slot.insert(part.to_string(), serde_json::to_value(v).expect("flag serializes"));
                    break;
                }
                slot = slot
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("flag paths do not collide");
            }
        }
        self
    }

    pub fn flag(self, path: &str, on: bool) -> Self {
        self.set(path, on.then_some(true))
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}
