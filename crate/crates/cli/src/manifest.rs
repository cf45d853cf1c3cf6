//! The per-run manifest written next to every command's outputs.

use std::path::Path;

use chrono::{SecondsFormat, Utc};
use mcclk::config::ModelConfig;
use mcclk::dataset::write_atomic;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn engine_version() -> String {
    let rev = env!("ENGINE_GIT_REV");
    if rev.is_empty() {
        env!("CARGO_PKG_VERSION").to_string()
    } else {
        format!("{}-g{rev}", env!("CARGO_PKG_VERSION"))
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// The full argument vector, program name included.
    pub args: Vec<String>,
    pub engine_version: String,
    pub started: String,
    pub finished: String,
    /// `ok`, or `error: <message>`.
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_hash: Option<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
}

impl RunManifest {
    pub fn start(command: &str, threads: Option<usize>) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            engine_version: engine_version(),
            started: now(),
            finished: String::new(),
            outcome: String::new(),
            threads,
            data_dir: None,
            dataset_hash: None,
            split_seed: None,
            checkpoint_hash: None,
            outputs: Vec::new(),
            config: None,
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Stamps the end time and outcome and writes `dir/manifest.toml`.
    pub fn finish(mut self, dir: &Path, outcome: &Result<(), String>) -> mcclk::Result<()> {
        self.finished = now();
        self.outcome = match outcome {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        };
        std::fs::create_dir_all(dir).map_err(|e| mcclk::Error::Config(format!("{}: {e}", dir.display())))?;
        let text = toml::to_string(&self).map_err(|e| mcclk::Error::Config(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}
