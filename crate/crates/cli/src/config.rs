use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pmsense_core::AqiTable;
use pmsense_service::ServiceConfig;
use serde::Deserialize;

/// Settings file passed with `--config`.
///
/// ```toml
/// aqi_table = "thresholds.json"
///
/// [service]
/// bind = "0.0.0.0:8080"
/// data_dir = "data"
///
/// [[service.channels]]
/// id = 1
/// name = "enseada"
/// write_key = "change-me"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub aqi_table: Option<PathBuf>,
    pub service: ServiceConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let mut c: CliConfig = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                // relative paths in the file are relative to the file
                if let Some(dir) = p.parent() {
                    c.aqi_table = c.aqi_table.map(|t| dir.join(t));
                    c.service.aqi_table = c.service.aqi_table.map(|t| dir.join(t));
                    c.service.data_dir = c.service.data_dir.map(|t| dir.join(t));
                }
                c
            }
            None => CliConfig::default(),
        };
        config.service.apply_env(|k| std::env::var(k).ok())?;
        if let Ok(v) = std::env::var("PMSENSE_AQI_TABLE") {
            if !v.is_empty() {
                config.aqi_table = Some(PathBuf::from(v));
            }
        }
        if config.service.aqi_table.is_none() {
            config.service.aqi_table = config.aqi_table.clone();
        }
        Ok(config)
    }

    pub fn table(&self) -> Result<AqiTable> {
        match &self.aqi_table {
            Some(p) => AqiTable::load(p).with_context(|| format!("loading AQI table {}", p.display())),
            None => Ok(AqiTable::default()),
        }
    }
}
