use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::{Command, Format};

pub const FILE_NAME: &str = "manifest.json";

/// Everything needed to re-run an invocation.
///
/// `--replay` re-executes `command` with the same settings; deterministic subcommands
/// then reproduce every output file byte for byte, provided the input files are unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub command: Command,
    pub format: Format,
    pub jobs: Option<usize>,
    /// Parameters after presets, config files and flag overrides were combined.
    #[serde(default)]
    pub resolved: serde_json::Value,
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Files written, relative to the output directory.
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub started_unix_ms: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(command: Command, format: Format, jobs: Option<usize>) -> Self {
        let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: command.name().to_owned(),
            command,
            format,
            jobs,
            resolved: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
            started_unix_ms,
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
