use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pmsense_core::sensing::ParticleModel;
use pmsense_core::timeseries::Channel;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Prefix of the environment variables that override file settings.
pub const ENV_PREFIX: &str = "PMSENSE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Store directory; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Overrides every channel's minimum write interval when set.
    pub rate_interval_secs: Option<f64>,
    pub snapshot_every: usize,
    /// Optional AQI threshold table (JSON).
    pub aqi_table: Option<PathBuf>,
    pub particle_model: ParticleModel,
    pub channels: Vec<Channel>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            rate_interval_secs: None,
            snapshot_every: pmsense_core::timeseries::store::DEFAULT_SNAPSHOT_EVERY,
            aqi_table: None,
            particle_model: ParticleModel::default(),
            channels: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path` (if any), then applies `PMSENSE_*` overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    /// Recognised keys: `PMSENSE_BIND`, `PMSENSE_DATA_DIR`,
    /// `PMSENSE_RATE_INTERVAL_SECS` and `PMSENSE_CHANNELS` (a JSON array of
    /// channel definitions).
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        let get = |name: &str| var(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        let bad = |name: &str, e: &dyn std::fmt::Display| {
            ServiceError::Config(format!("{ENV_PREFIX}{name}: {e}"))
        };
        if let Some(v) = get("BIND") {
            self.bind = v.parse().map_err(|e| bad("BIND", &e))?;
        }
        if let Some(v) = get("DATA_DIR") {
            self.data_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("RATE_INTERVAL_SECS") {
            self.rate_interval_secs = Some(v.parse().map_err(|e| bad("RATE_INTERVAL_SECS", &e))?);
        }
        if let Some(v) = get("CHANNELS") {
            self.channels = serde_json::from_str(&v).map_err(|e| bad("CHANNELS", &e))?;
        }
        Ok(())
    }

    /// Channel definitions with the global rate interval applied.
    pub fn effective_channels(&self) -> Result<Vec<Channel>, ServiceError> {
        let interval = self
            .rate_interval_secs
            .map(|s| {
                Duration::try_from_secs_f64(s)
                    .ok()
                    .filter(|d| !d.is_zero())
                    .ok_or_else(|| ServiceError::Config(format!("rate interval must be > 0 s, got {s}")))
            })
            .transpose()?;
        Ok(self
            .channels
            .iter()
            .cloned()
            .map(|c| match interval {
                Some(d) => c.with_interval(d),
                None => c,
            })
            .collect())
    }
}
