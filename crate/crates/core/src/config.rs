//! Run configuration: a flat key-value TOML table with per-dataset presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrastive::NegativeScope;
use crate::error::{Error, Result};

/// Which contrastive terms are kept. Encoders are never removed, only loss
/// terms, so the representation size is the same for every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    NoLocal,
    NoGlobal,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no-local" => Ok(Ablation::NoLocal),
            "no-global" => Ok(Ablation::NoGlobal),
            _ => Err(Error::Config(format!("unknown ablation {s:?} (full, no-local, no-global)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoLocal => "no-local",
            Ablation::NoGlobal => "no-global",
        })
    }
}

/// When the item-item graph is rebuilt from the current embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebuildSchedule {
    Once,
    Epoch,
    Steps,
}

impl FromStr for RebuildSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "once" => Ok(RebuildSchedule::Once),
            "epoch" => Ok(RebuildSchedule::Epoch),
            "steps" => Ok(RebuildSchedule::Steps),
            _ => Err(Error::Config(format!("unknown rebuild schedule {s:?}"))),
        }
    }
}

/// Every hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    /// Share of the local term inside the contrastive loss.
    pub alpha: f64,
    /// Weight of the contrastive loss.
    pub beta: f64,
    /// L2 weight on batch-touched parameters.
    pub l2: f64,
    pub tau: f64,
    /// Neighbors kept per item in the semantic graph.
    pub knn_k: usize,
    /// Collaborative propagation depth.
    pub collab_depth: usize,
    /// Knowledge-graph aggregation depth used to build the semantic graph.
    pub kg_depth: usize,
    /// Propagation depth over the semantic graph.
    pub semantic_depth: usize,
    /// Structural encoder depth.
    pub structural_depth: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub negative_scope: NegativeScope,
    pub rebuild: RebuildSchedule,
    /// Step interval for [`RebuildSchedule::Steps`].
    pub rebuild_every: usize,
    pub sim_block_rows: usize,
    pub ablation: Ablation,
    pub split: [f64; 3],
    /// Ratings at or above this value are positives; absent means all are.
    pub threshold: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            alpha: 0.2,
            beta: 0.1,
            l2: 1e-5,
            tau: 0.8,
            knn_k: 10,
            collab_depth: 3,
            kg_depth: 2,
            semantic_depth: 2,
            structural_depth: 2,
            learning_rate: 1e-3,
            batch_size: 2048,
            epochs: 100,
            patience: 10,
            seed: 2022,
            negative_scope: NegativeScope::InBatch,
            rebuild: RebuildSchedule::Epoch,
            rebuild_every: 100,
            sim_block_rows: 512,
            ablation: Ablation::Full,
            split: crate::ingest::DEFAULT_RATIOS,
            threshold: None,
        }
    }
}

/// Parameters accepted by [`ModelConfig::set`] and the sweep command.
pub const SWEEP_KEYS: [&str; 9] = ["alpha", "beta", "tau", "k", "K", "K'", "L", "L'", "lr"];

impl ModelConfig {
    /// Defaults for a named dataset.
    pub fn preset(dataset: &str) -> Result<Self> {
        let base = ModelConfig::default();
        match dataset {
            "lastfm" => Ok(base),
            "book" => Ok(ModelConfig {
                collab_depth: 2,
                semantic_depth: 1,
                ..base
            }),
            "movie" => Ok(ModelConfig {
                collab_depth: 2,
                semantic_depth: 1,
                threshold: Some(4.0),
                ..base
            }),
            _ => Err(Error::Config(format!("unknown dataset preset {dataset:?} (lastfm, book, movie)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; keys missing from the file take preset values.
    pub fn load(path: &Path, base: &ModelConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_over(&text, base)
    }

    /// Parses config text; keys it leaves out take `base` values.
    pub fn from_toml_over(text: &str, base: &ModelConfig) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merged.extend(overrides);
        let cfg: ModelConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.dim == 0 {
            bad.push("dim must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bad.push(format!("alpha {} outside [0, 1]", self.alpha));
        }
        for (name, v) in [("beta", self.beta), ("tau", self.tau), ("learning_rate", self.learning_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            bad.push(format!("l2 must be non-negative, got {}", self.l2));
        }
        if self.knn_k == 0 {
            bad.push("knn_k must be at least 1".into());
        }
        if self.batch_size < 2 {
            bad.push("batch_size must be at least 2".into());
        }
        if self.rebuild == RebuildSchedule::Steps && self.rebuild_every == 0 {
            bad.push("rebuild_every must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Overrides one sweepable parameter from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let real = || value.parse::<f64>().map_err(|_| Error::Config(format!("{key}: bad number {value:?}")));
        let count = || value.parse::<usize>().map_err(|_| Error::Config(format!("{key}: bad count {value:?}")));
        match key {
            "alpha" => self.alpha = real()?,
            "beta" => self.beta = real()?,
            "tau" => self.tau = real()?,
            "lr" => self.learning_rate = real()?,
            "k" => self.knn_k = count()?,
            "K" => self.collab_depth = count()?,
            "K'" => self.kg_depth = count()?,
            "L" => self.semantic_depth = count()?,
            "L'" => self.structural_depth = count()?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter {key:?} (one of {})",
                    SWEEP_KEYS.join(", ")
                )))
            }
        }
        self.validate()
    }

    /// Effective `(local, global)` weights inside the contrastive loss.
    pub fn contrast_weights(&self) -> (f64, f64) {
        let alpha = match self.ablation {
            Ablation::Full => self.alpha,
            Ablation::NoGlobal => 1.0,
            Ablation::NoLocal => 0.0,
        };
        (self.beta * alpha, self.beta * (1.0 - alpha))
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// First eight bytes of [`ModelConfig::hash`] as an integer.
    pub fn hash_u64(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
