use std::time::Duration;

use serde::{Deserialize, Serialize};

pub type ChannelId = u64;

pub const MAX_FIELDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    #[default]
    Unlimited,
    /// Keep at most this many entries.
    Count(usize),
    /// Drop entries whose sample timestamp is older than the newest by more
    /// than this many seconds.
    MaxAgeSecs(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub name: String,
    pub write_key: String,
    #[serde(default = "default_fields")]
    pub fields: Vec<String>,
    #[serde(
        rename = "min_write_interval_secs",
        with = "duration_secs",
        default = "default_interval"
    )]
    pub min_write_interval: Duration,
    #[serde(default)]
    pub retention: Retention,
}

fn default_fields() -> Vec<String> {
    vec!["pm25".to_string()]
}

fn default_interval() -> Duration {
    Duration::from_secs(30)
}

impl Channel {
    /// A channel with one `pm25` field and a 30 s write interval.
    pub fn new(id: ChannelId, name: impl Into<String>, write_key: impl Into<String>) -> Self {
        Channel {
            id,
            name: name.into(),
            write_key: write_key.into(),
            fields: default_fields(),
            min_write_interval: default_interval(),
            retention: Retention::Unlimited,
        }
    }

    pub fn with_fields<I, S>(mut self, fields: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.fields = fields.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_interval(mut self, interval: Duration) -> Self {
        self.min_write_interval = interval;
        self
    }

    pub fn with_retention(mut self, retention: Retention) -> Self {
        self.retention = retention;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_write_interval.is_zero() {
            return Err("min_write_interval must be > 0".into());
        }
        if self.fields.is_empty() || self.fields.len() > MAX_FIELDS {
            return Err(format!("a channel has 1..={MAX_FIELDS} fields"));
        }
        for (k, f) in self.fields.iter().enumerate() {
            if f.trim().is_empty() {
                return Err("field names must be non-empty".into());
            }
            if self.fields[..k].contains(f) {
                return Err(format!("duplicate field `{f}`"));
            }
        }
        match self.retention {
            Retention::Count(0) => Err("retention count must be > 0".into()),
            Retention::MaxAgeSecs(s) if s <= 0 => Err("retention age must be > 0".into()),
            _ => Ok(()),
        }
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.fields.iter().any(|f| f == field)
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Channel::new(1, "a", "k").validate().is_ok());
        assert!(Channel::new(1, "a", "k").with_fields(["x", "x"]).validate().is_err());
        assert!(Channel::new(1, "a", "k")
            .with_fields((0..9).map(|i| format!("f{i}")))
            .validate()
            .is_err());
        assert!(Channel::new(1, "a", "k").with_interval(Duration::ZERO).validate().is_err());
        assert!(Channel::new(1, "a", "k").with_retention(Retention::Count(0)).validate().is_err());
    }

    #[test]
    fn json_shape() {
        let c: Channel = serde_json::from_str(
            r#"{"id": 3, "name": "ufes", "write_key": "abc", "fields": ["pm25", "pm1"],
                "retention": {"count": 100}}"#,
        )
        .unwrap();
        assert_eq!(c.min_write_interval, Duration::from_secs(30));
        assert_eq!(c.retention, Retention::Count(100));
        let back: Channel = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
