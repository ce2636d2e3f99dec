use std::path::Path;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-link delay: `base_ms` (with ±10% uniform jitter) plus `per_byte_ms`
/// for every byte sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub base_ms: f64,
    pub per_byte_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::ZERO
    }
}

impl LatencyModel {
    pub const ZERO: LatencyModel = LatencyModel {
        base_ms: 0.0,
        per_byte_ms: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        self.base_ms == 0.0 && self.per_byte_ms == 0.0
    }

    /// Smallest delay the model can produce for `bytes`.
    pub fn lower_bound(&self, bytes: usize) -> Duration {
        Duration::from_secs_f64((0.9 * self.base_ms + self.per_byte_ms * bytes as f64) / 1e3)
    }

    pub fn sample<R: Rng>(&self, bytes: usize, rng: &mut R) -> Duration {
        if self.is_zero() {
            return Duration::ZERO;
        }
        let jitter = if self.base_ms > 0.0 {
            rng.gen_range(-0.1..=0.1) * self.base_ms
        } else {
            0.0
        };
        let ms = self.base_ms + jitter + self.per_byte_ms * bytes as f64;
        Duration::from_secs_f64(ms.max(0.0) / 1e3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub peer_count: usize,
    pub latency: LatencyModel,
    pub seed: u64,
    /// Maximum transactions per block.
    pub batch_size: usize,
    /// A non-full batch is cut this long after its first transaction.
    pub batch_timeout_ms: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            peer_count: 5,
            latency: LatencyModel::ZERO,
            seed: 0,
            batch_size: 16,
            batch_timeout_ms: 100,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing network config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid network config: {0}")]
    Invalid(String),
}

impl NetworkConfig {
    /// Parses `key = value` text, for example:
    ///
    /// ```text
    /// peer_count = 5
    /// seed = 7
    /// [latency]
    /// base_ms = 5.0
    /// per_byte_ms = 0.001
    /// ```
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let cfg: NetworkConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.peer_count == 0 {
            return Err(ConfigError::Invalid("peer_count must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be at least 1".into()));
        }
        let l = &self.latency;
        if !(l.base_ms >= 0.0 && l.per_byte_ms >= 0.0 && l.base_ms.is_finite() && l.per_byte_ms.is_finite()) {
            return Err(ConfigError::Invalid("delays must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn batch_timeout(&self) -> Duration {
        Duration::from_millis(self.batch_timeout_ms)
    }
}
