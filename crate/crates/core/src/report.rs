//! JSON run reports and input fingerprints.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// SHA-256 over `blob <len>\0<content>`, the object hashing scheme of git.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub hash: String,
}

/// A report under construction. Timing values live in their own object so
/// that comparisons can drop them.
#[derive(Debug)]
pub struct Report {
    command: String,
    seed: Option<u64>,
    parameters: Map<String, Value>,
    inputs: Vec<InputRecord>,
    result: Map<String, Value>,
    timing: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            parameters: Map::new(),
            inputs: Vec::new(),
            result: Map::new(),
            timing: Map::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            hash: file_hash(path)?,
        });
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.parameters.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.result.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn timing(&mut self, key: &str, seconds: f64) {
        self.timing.insert(key.into(), Value::from(seconds));
    }

    pub fn to_value(&self) -> Value {
        let mut root = Map::new();
        root.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        root.insert("command".into(), Value::from(self.command.clone()));
        root.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        root.insert("parameters".into(), Value::Object(self.parameters.clone()));
        root.insert(
            "inputs".into(),
            serde_json::to_value(&self.inputs).expect("input records serialize"),
        );
        root.insert("result".into(), Value::Object(self.result.clone()));
        root.insert("timing".into(), Value::Object(self.timing.clone()));
        Value::Object(root)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_value())?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// The report with its timing object removed, for comparisons.
pub fn without_timing(mut report: Value) -> Value {
    if let Some(obj) = report.as_object_mut() {
        obj.remove("timing");
    }
    report
}
