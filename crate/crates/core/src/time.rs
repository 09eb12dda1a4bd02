//! UTC instants stored as epoch seconds.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A UTC instant with one-second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ISO-8601 timestamp `{0}`")]
pub struct TimestampParseError(pub String);

impl Timestamp {
    pub const fn from_epoch_seconds(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn epoch_seconds(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    /// Accepts RFC 3339 (`2019-08-28T16:00:00Z`, offsets allowed) and the
    /// offset-less `2019-08-28T16:00:00` / `2019-08-28 16:00:00` forms, the
    /// latter being read as UTC.
    pub fn parse_iso8601(s: &str) -> Result<Self, TimestampParseError> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp(dt.timestamp()));
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
            if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                return Ok(Timestamp(naive.and_utc().timestamp()));
            }
        }
        Err(TimestampParseError(s.to_string()))
    }

    pub fn to_iso8601(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
            None => format!("@{}", self.0),
        }
    }

    pub fn plus_seconds(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Start of the `width_secs` grid cell containing this instant.
    pub fn floor_to(self, width_secs: i64) -> Self {
        Timestamp(self.0.div_euclid(width_secs) * width_secs)
    }

    /// Hour of day (0..24) as a fraction, UTC.
    pub fn hour_of_day(self) -> f64 {
        self.0.rem_euclid(86_400) as f64 / 3600.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso8601())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse_iso8601(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_iso8601())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse_iso8601(&s).map_err(serde::de::Error::custom)
    }
}
