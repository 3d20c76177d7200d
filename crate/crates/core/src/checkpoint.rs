//! Versioned JSON checkpoints of trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::experiment::TrainedModel;
use crate::output::write_atomic;

pub const SCHEMA_VERSION: u64 = 1;

/// Circuit parameter arrays are stored row-major over (layer, qubit, angle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u64,
    pub method: Method,
    pub seed: u64,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn new(config: &ExperimentConfig, model: TrainedModel) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method: model.method(),
            seed: config.seed,
            library_version: crate::experiment::LIBRARY_VERSION.to_string(),
            config: config.clone(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_error(text: &str, e: serde_json::Error) -> Error {
    Error::Parse { offset: byte_offset(text, e.line(), e.column()), message: e.to_string() }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(text, e))?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(Error::Parse { offset: 0, message: "missing or non-integer `schema_version`".into() })?;
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found, expected: SCHEMA_VERSION });
    }
    serde_json::from_str(text).map_err(|e| parse_error(text, e))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, checkpoint.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
