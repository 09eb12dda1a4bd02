//! Device-versus-reference-station comparison.
//!
//! Device samples are averaged into fixed buckets; each station reading is
//! matched with the bucket containing its timestamp. Differences are only
//! taken where both sides have a value; station hours marked missing are
//! reported as gaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aqi::{AqiClass, AqiError, AqiTable, Pollutant};
use crate::par::Exec;
use crate::time::Timestamp;
use crate::timeseries::{aggregate_points, AggregateError, AggregatedPoint, StationSeries};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("device and station series share no timestamps")]
    NoOverlap,
    #[error(transparent)]
    Aqi(#[from] AqiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Matched,
    /// The station row exists but has no value.
    StationMissing,
    /// No station row for this device bucket.
    NoStationRow,
    /// Station value without device data in that bucket.
    NoDeviceData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub timestamp: Timestamp,
    pub device: Option<f64>,
    pub station: Option<f64>,
    /// `device − station`, only when both are present.
    pub delta: Option<f64>,
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub station_name: String,
    pub bucket_minutes: u32,
    pub matched_points: usize,
    pub mean_abs_difference: f64,
    pub mean_difference: f64,
    pub max_abs_difference: f64,
    pub device_mean: f64,
    pub station_mean: f64,
    pub device_class: AqiClass,
    pub station_class: AqiClass,
    /// Timestamps of station rows marked missing.
    pub gaps: Vec<Timestamp>,
    pub points: Vec<ComparisonPoint>,
    pub device_series: Vec<AggregatedPoint>,
}

pub fn compare(
    device: &[(Timestamp, f64)],
    station: &StationSeries,
    bucket_minutes: u32,
    table: &AqiTable,
    exec: Exec,
) -> Result<ComparisonReport, CompareError> {
    let device_series = aggregate_points(device, bucket_minutes, exec)?;
    let width = i64::from(bucket_minutes) * 60;

    let mut rows: BTreeMap<Timestamp, (Option<f64>, Option<Option<f64>>)> = BTreeMap::new();
    for p in &device_series {
        rows.entry(p.bucket_start).or_default().0 = Some(p.mean);
    }
    for p in &station.points {
        rows.entry(p.timestamp.floor_to(width)).or_default().1 = Some(p.pm25);
    }

    let mut points = Vec::with_capacity(rows.len());
    let mut gaps = Vec::new();
    for (timestamp, (dev, sta)) in rows {
        let station_value = sta.flatten();
        let status = match (dev, sta) {
            (Some(_), Some(Some(_))) => PointStatus::Matched,
            (_, Some(None)) => PointStatus::StationMissing,
            (Some(_), None) => PointStatus::NoStationRow,
            (None, _) => PointStatus::NoDeviceData,
        };
        if matches!(sta, Some(None)) {
            gaps.push(timestamp);
        }
        let delta = match (dev, station_value) {
            (Some(d), Some(s)) => Some(d - s),
            _ => None,
        };
        points.push(ComparisonPoint {
            timestamp,
            device: dev,
            station: station_value,
            delta,
            status,
        });
    }

    let matched: Vec<&ComparisonPoint> = points.iter().filter(|p| p.delta.is_some()).collect();
    if matched.is_empty() {
        return Err(CompareError::NoOverlap);
    }
    let n = matched.len() as f64;
    let mean = |f: &dyn Fn(&ComparisonPoint) -> f64| matched.iter().map(|p| f(p)).sum::<f64>() / n;
    let mean_abs_difference = mean(&|p| p.delta.unwrap().abs());
    let mean_difference = mean(&|p| p.delta.unwrap());
    let device_mean = mean(&|p| p.device.unwrap());
    let station_mean = mean(&|p| p.station.unwrap());
    let max_abs_difference = matched
        .iter()
        .map(|p| p.delta.unwrap().abs())
        .fold(0.0, f64::max);

    Ok(ComparisonReport {
        station_name: station.station_name.clone(),
        bucket_minutes,
        matched_points: matched.len(),
        mean_abs_difference,
        mean_difference,
        max_abs_difference,
        device_mean,
        station_mean,
        device_class: table.classify(Pollutant::Pm25, device_mean)?,
        station_class: table.classify(Pollutant::Pm25, station_mean)?,
        gaps,
        points,
        device_series,
    })
}

impl ComparisonReport {
    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        let mut out = format!(
            "{:<22} {:>10} {:>10} {:>10}  {}\n",
            "timestamp", "device", "station", "delta", "status"
        );
        for p in &self.points {
            let status = match p.status {
                PointStatus::Matched => "",
                PointStatus::StationMissing => "GAP (station missing)",
                PointStatus::NoStationRow => "no station row",
                PointStatus::NoDeviceData => "no device data",
            };
            out.push_str(&format!(
                "{:<22} {:>10} {:>10} {:>10}  {}\n",
                p.timestamp.to_iso8601(),
                fmt(p.device),
                fmt(p.station),
                fmt(p.delta),
                status
            ));
        }
        out.push_str(&format!(
            "\nstation: {}  bucket: {} min  matched: {}  gaps: {}\n",
            self.station_name,
            self.bucket_minutes,
            self.matched_points,
            self.gaps.len()
        ));
        out.push_str(&format!(
            "mean |device - station|: {:.6}  bias: {:+.6}  max: {:.6}\n",
            self.mean_abs_difference, self.mean_difference, self.max_abs_difference
        ));
        out.push_str(&format!(
            "device mean {:.3} -> {}  station mean {:.3} -> {}\n",
            self.device_mean, self.device_class.level, self.station_mean, self.station_class.level
        ));
        out
    }
}
