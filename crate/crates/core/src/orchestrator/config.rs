use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cost::Rates;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Knobs for running verifications. Missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Non-finish actions allowed per run.
    pub step_cap: usize,
    pub lease_ttl_seconds: u64,
    /// Concurrent runs.
    pub parallelism: usize,
    /// Display slots in the pool.
    pub slots: usize,
    /// How long one lease attempt may wait before the job is re-queued.
    pub acquire_timeout_ms: u64,
    /// Lease attempts before a job is given up.
    pub max_lease_attempts: u32,
    pub rates: Rates,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            step_cap: 75,
            lease_ttl_seconds: 600,
            parallelism: 1,
            slots: 8,
            acquire_timeout_ms: 2_000,
            max_lease_attempts: 100,
            rates: Rates::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.slots == 0 {
            return Err(ConfigError::Invalid("slots must be at least 1".into()));
        }
        if self.rates.input_per_million.is_sign_negative() || self.rates.output_per_million.is_sign_negative() {
            return Err(ConfigError::Invalid("rates must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lease_ttl(&self) -> Duration {
        Duration::from_secs(self.lease_ttl_seconds)
    }

    pub fn acquire_timeout(&self) -> Duration {
        Duration::from_millis(self.acquire_timeout_ms)
    }
}
