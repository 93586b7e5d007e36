//! Flat key=value run configuration: file values fill in flags the command
//! line leaves unset.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parsed config file. Lines are `key = value`; `#` starts a comment.
#[derive(Debug, Default, Clone)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(KvConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), lineno + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { values })
    }

    /// Flag value if given, else config-file value, else the default.
    pub fn resolve<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| anyhow::anyhow!("config key {key}: cannot parse {raw:?}")),
            None => Ok(default),
        }
    }
}

/// Documented defaults shared across commands.
pub mod defaults {
    pub const SEED: u64 = 42;
    pub const THREADS: usize = 1;
    pub const VOCAB_SIZE: usize = 8000;
    /// Mirrors the usual subword-training coverage default.
    pub const COVERAGE: f64 = 0.9995;
    pub const STEPS: u64 = 1000;
    pub const BATCH_SIZE: usize = 32;
    pub const LR: f64 = 1e-3;
    pub const TRAIN_FRACTION: f64 = 0.9;
    pub const ENCODE_CHUNK: usize = 64;
    pub const TOP_K: usize = 10;
    pub const MAP_CUTOFF: usize = 100;
}
