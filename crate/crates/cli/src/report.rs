//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const NET_FORMAT: &str = sma_core::ffnet::NET_FORMAT;
pub const TRANSFORMER_FORMAT: &str = sma_core::transformer::TRANSFORMER_FORMAT;

/// Accumulates everything a command reads, so the report can pin it.
#[derive(Debug, Default)]
pub struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.digests.insert(path.display().to_string(), hex::encode(Sha256::digest(text.as_bytes())));
        Ok(text)
    }

    pub fn to_json(&self) -> Value {
        json!(self.digests)
    }
}

pub struct Report {
    pub command: String,
    pub options: Value,
    pub seed: Option<u64>,
    pub inputs: Inputs,
    pub results: Value,
}

impl Report {
    pub fn to_json(&self) -> Value {
        json!({
            "tool": "sma",
            "version": env!("CARGO_PKG_VERSION"),
            "formats": {"net": NET_FORMAT, "transformer": TRANSFORMER_FORMAT},
            "command": self.command,
            "options": self.options,
            "seed": self.seed,
            "inputs_digest": self.inputs.to_json(),
            "results": self.results,
        })
    }

    pub fn write(&self, path: &PathBuf) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
