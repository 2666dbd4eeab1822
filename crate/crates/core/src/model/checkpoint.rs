//! Checkpoint files.
//!
//! Layout:
//!
//! ```text
//! tppkit-checkpoint v1\n
//! {"config": {...}, "step": N, "layout": [{"name": .., "shape": [..]}, ..], "param_count": P}\n
//! P little-endian f64 values, tensors in layout order, each row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{shapes, PARAM_NAMES};
use super::{ModelConfig, ModelError, ModelParams};

const MAGIC: &str = "tppkit-checkpoint v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub step: u64,
    pub layout: Vec<TensorLayout>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, step: u64, params: ModelParams) -> Self {
        Self { config, step, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = PARAM_NAMES
            .iter()
            .zip(shapes(&self.config))
            .map(|(name, shape)| TensorLayout { name: name.to_string(), shape })
            .collect();
        let header = CheckpointHeader {
            config: self.config.clone(),
            step: self.step,
            layout,
            param_count: self.params.num_params(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
        out.push(b'\n');
        for v in self.params.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |msg: &str| ModelError::Checkpoint(msg.to_string());
        let magic_end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        if &bytes[..magic_end] != MAGIC.as_bytes() {
            return Err(bad("not a tppkit checkpoint"));
        }
        let rest = &bytes[magic_end + 1..];
        let header_end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&rest[..header_end])
            .map_err(|e| ModelError::Checkpoint(format!("bad header: {e}")))?;
        header.config.validate()?;
        let blob = &rest[header_end + 1..];
        if blob.len() != header.param_count * 8 {
            return Err(bad("parameter blob length disagrees with header"));
        }
        let flat: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let params = ModelParams::from_flat(&header.config, &flat)?;
        Ok(Self { config: header.config, step: header.step, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |e: std::io::Error| ModelError::Io { path: path.display().to_string(), source: e };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io { path: path.display().to_string(), source: e })?;
        Self::from_bytes(&bytes)
    }
}
