use std::thread::sleep;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use pmsense_core::timeseries::DeviceRecord;
use pmsense_service::api::WriteRequest;
use reqwest::blocking::Client;
use reqwest::StatusCode;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ReplayStats {
    pub accepted: usize,
    pub rate_limited: usize,
    pub rejected: usize,
}

pub struct Replay<'a> {
    pub base_url: &'a str,
    pub channel: u64,
    pub write_key: &'a str,
    /// Playback speed relative to the recorded timestamps; `0` sends as fast
    /// as possible.
    pub speed: f64,
    /// Wait out `429` responses and resend instead of skipping the record.
    pub retry: bool,
}

impl Replay<'_> {
    pub fn run(&self, records: &[DeviceRecord]) -> Result<ReplayStats> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            bail!("speed must be >= 0");
        }
        let client = Client::new();
        let url = format!("{}/channels/{}/write", self.base_url.trim_end_matches('/'), self.channel);
        let mut stats = ReplayStats::default();
        let started = Instant::now();
        let first = records.first().map(|r| r.timestamp);
        for r in records {
            if let (Some(first), true) = (first, self.speed > 0.0) {
                let offset = (r.timestamp.epoch_seconds() - first.epoch_seconds()) as f64 / self.speed;
                let due = Duration::from_secs_f64(offset.max(0.0));
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    sleep(wait);
                }
            }
            let body = WriteRequest {
                write_key: self.write_key.to_string(),
                field: r.field.clone(),
                value: Some(r.value),
                raw: None,
                sensor_id: Some(r.sensor_id.clone()),
                timestamp: Some(r.timestamp),
            };
            loop {
                let resp = client
                    .post(&url)
                    .json(&body)
                    .send()
                    .with_context(|| format!("POST {url}"))?;
                match resp.status() {
                    StatusCode::OK => stats.accepted += 1,
                    StatusCode::TOO_MANY_REQUESTS => {
                        let secs = resp
                            .headers()
                            .get(reqwest::header::RETRY_AFTER)
                            .and_then(|v| v.to_str().ok())
                            .and_then(|v| v.parse::<u64>().ok())
                            .unwrap_or(1);
                        if self.retry {
                            sleep(Duration::from_secs(secs));
                            continue;
                        }
                        stats.rate_limited += 1;
                    }
                    StatusCode::UNAUTHORIZED | StatusCode::NOT_FOUND => {
                        bail!("server refused the replay: {}", resp.text().unwrap_or_default())
                    }
                    other => {
                        eprintln!("record at {} rejected ({other})", r.timestamp);
                        stats.rejected += 1;
                    }
                }
                break;
            }
        }
        Ok(stats)
    }
}
