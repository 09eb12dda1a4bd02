use std::path::Path;

use anyhow::{bail, Context, Result};
use pmsense_core::Timestamp;
use serde::Deserialize;

/// Daily concentration profile for the simulator: 24 hourly PM2.5 levels,
/// linearly interpolated between hour marks and repeated every day.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub location: String,
    pub sensor_id: String,
    pub hourly_pm25: Vec<f64>,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let p: Profile = serde_json::from_str(&text).with_context(|| format!("bad profile {}", path.display()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hourly_pm25.len() != 24 {
            bail!("profile needs 24 hourly values, got {}", self.hourly_pm25.len());
        }
        if let Some(v) = self.hourly_pm25.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            bail!("profile values must be finite and >= 0, got {v}");
        }
        if self.sensor_id.trim().is_empty() {
            bail!("profile sensor_id must be non-empty");
        }
        Ok(())
    }

    pub fn level_at(&self, t: Timestamp) -> f64 {
        let h = t.hour_of_day();
        let lo = h.floor() as usize % 24;
        let hi = (lo + 1) % 24;
        let frac = h - h.floor();
        self.hourly_pm25[lo] * (1.0 - frac) + self.hourly_pm25[hi] * frac
    }

    pub fn targets(&self, start: Timestamp, hours: u32, cadence_secs: u32) -> Vec<(Timestamp, f64)> {
        let n = u64::from(hours) * 3600 / u64::from(cadence_secs.max(1));
        (0..n as i64)
            .map(|k| {
                let t = start.plus_seconds(k * i64::from(cadence_secs));
                (t, self.level_at(t))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_wraps() {
        let mut hourly = vec![0.0; 24];
        hourly[23] = 10.0;
        let p = Profile { location: String::new(), sensor_id: "s".into(), hourly_pm25: hourly };
        assert_eq!(p.level_at(Timestamp(23 * 3600)), 10.0);
        assert_eq!(p.level_at(Timestamp(23 * 3600 + 1800)), 5.0);
        assert_eq!(p.level_at(Timestamp(86_400)), 0.0);
        assert_eq!(p.targets(Timestamp(0), 1, 30).len(), 120);
    }

    #[test]
    fn rejects_bad_schema() {
        let p = Profile { location: String::new(), sensor_id: "s".into(), hourly_pm25: vec![1.0; 23] };
        assert!(p.validate().is_err());
        let p = Profile { location: String::new(), sensor_id: "s".into(), hourly_pm25: vec![-1.0; 24] };
        assert!(p.validate().is_err());
    }
}
