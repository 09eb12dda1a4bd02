//! Five-level air-quality index classification.
//!
//! Each pollutant has four ascending breakpoints `b0 < b1 < b2 < b3` and an
//! averaging window. Bands are `[0, b0]`, `(b0, b1]`, `(b1, b2]`, `(b2, b3]`
//! and `(b3, ∞)`, mapping to GOOD through HAZARDOUS. The compiled-in defaults
//! are the Espírito Santo state (IEMA) table; other jurisdictions can load
//! their own from JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sensing::ConcentrationSample;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AqiError {
    #[error("concentration must be >= 0, got {0}")]
    NegativeConcentration(f64),
    #[error("cannot classify an empty series")]
    EmptySeries,
    #[error("unknown pollutant `{0}`")]
    UnknownPollutant(String),
    #[error("unknown AQI level `{0}`")]
    UnknownLevel(String),
    #[error("invalid thresholds for {pollutant}: {reason}")]
    InvalidThresholds { pollutant: String, reason: String },
    #[error("threshold config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AqiLevel {
    Good,
    Moderate,
    Unhealthy,
    VeryUnhealthy,
    Hazardous,
}

impl AqiLevel {
    pub const ALL: [AqiLevel; 5] = [
        AqiLevel::Good,
        AqiLevel::Moderate,
        AqiLevel::Unhealthy,
        AqiLevel::VeryUnhealthy,
        AqiLevel::Hazardous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AqiLevel::Good => "GOOD",
            AqiLevel::Moderate => "MODERATE",
            AqiLevel::Unhealthy => "UNHEALTHY",
            AqiLevel::VeryUnhealthy => "VERY_UNHEALTHY",
            AqiLevel::Hazardous => "HAZARDOUS",
        }
    }

    fn from_band(band: usize) -> Self {
        Self::ALL[band.min(4)]
    }
}

impl fmt::Display for AqiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AqiLevel {
    type Err = AqiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        AqiLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| AqiError::UnknownLevel(s.to_string()))
    }
}

/// A level together with its population health-risk description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AqiClass {
    pub level: AqiLevel,
    pub health_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "pm10")]
    Pm10,
    #[serde(rename = "pm25")]
    Pm25,
    #[serde(rename = "so2")]
    So2,
    #[serde(rename = "no2")]
    No2,
    #[serde(rename = "o3")]
    O3,
    #[serde(rename = "co")]
    Co,
}

impl Pollutant {
    pub const ALL: [Pollutant; 6] = [
        Pollutant::Pm10,
        Pollutant::Pm25,
        Pollutant::So2,
        Pollutant::No2,
        Pollutant::O3,
        Pollutant::Co,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Pollutant::Pm10 => "pm10",
            Pollutant::Pm25 => "pm25",
            Pollutant::So2 => "so2",
            Pollutant::No2 => "no2",
            Pollutant::O3 => "o3",
            Pollutant::Co => "co",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Pollutant {
    type Err = AqiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '.' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Pollutant::ALL
            .into_iter()
            .find(|p| p.key() == norm)
            .ok_or_else(|| AqiError::UnknownPollutant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantThresholds {
    pub window_hours: u32,
    /// Upper (inclusive) bounds of GOOD, MODERATE, UNHEALTHY, VERY_UNHEALTHY.
    pub boundaries: [f64; 4],
    #[serde(default = "default_unit")]
    pub unit: String,
}

fn default_unit() -> String {
    "µg/m³".to_string()
}

impl PollutantThresholds {
    pub fn new(window_hours: u32, boundaries: [f64; 4]) -> Self {
        PollutantThresholds {
            window_hours,
            boundaries,
            unit: default_unit(),
        }
    }

    fn validate(&self, pollutant: &str) -> Result<(), AqiError> {
        let bad = |reason: &str| AqiError::InvalidThresholds {
            pollutant: pollutant.to_string(),
            reason: reason.to_string(),
        };
        if self.window_hours == 0 {
            return Err(bad("window_hours must be > 0"));
        }
        if self.boundaries.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(bad("boundaries must be finite and >= 0"));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("boundaries must be strictly ascending"));
        }
        Ok(())
    }

    pub fn level(&self, concentration: f64) -> AqiLevel {
        let band = self
            .boundaries
            .iter()
            .position(|b| concentration <= *b)
            .unwrap_or(4);
        AqiLevel::from_band(band)
    }
}

const TEXT_GOOD_OR_MODERATE: &str = "People from sensitive groups (children, the elderly and people with cardiorespiratory diseases) may present symptoms such as dry cough and tiredness. The general population is not affected.";
const TEXT_UNHEALTHY: &str = "The entire population may present symptoms such as dry cough, tiredness, burning eyes, nose and throat. People from sensitive groups can have more serious health effects.";
const TEXT_VERY_UNHEALTHY: &str = "The entire population may present worsening of symptoms such as dry cough, tiredness, burning eyes, nose and throat, as well as shortness of breath and wheezing. Even more serious effects on the health of sensitive groups.";
const TEXT_HAZARDOUS: &str = "The entire population may be at risk of manifestations of respiratory and cardiovascular diseases. Increase in premature deaths in people from sensitive groups.";

/// Breakpoint tables plus health texts.
#[derive(Debug, Clone, PartialEq)]
pub struct AqiTable {
    thresholds: BTreeMap<Pollutant, PollutantThresholds>,
    health_texts: BTreeMap<AqiLevel, String>,
}

impl Default for AqiTable {
    fn default() -> Self {
        let thresholds = BTreeMap::from([
            (Pollutant::Pm10, PollutantThresholds::new(24, [50.0, 120.0, 150.0, 250.0])),
            (Pollutant::Pm25, PollutantThresholds::new(24, [25.0, 60.0, 125.0, 210.0])),
            (Pollutant::So2, PollutantThresholds::new(24, [20.0, 60.0, 365.0, 800.0])),
            (Pollutant::No2, PollutantThresholds::new(1, [200.0, 240.0, 320.0, 1130.0])),
            (Pollutant::O3, PollutantThresholds::new(8, [100.0, 140.0, 160.0, 200.0])),
            (
                Pollutant::Co,
                PollutantThresholds::new(8, [10_000.0, 13_000.0, 15_000.0, 17_000.0]),
            ),
        ]);
        let health_texts = BTreeMap::from([
            (AqiLevel::Good, TEXT_GOOD_OR_MODERATE.to_string()),
            (AqiLevel::Moderate, TEXT_GOOD_OR_MODERATE.to_string()),
            (AqiLevel::Unhealthy, TEXT_UNHEALTHY.to_string()),
            (AqiLevel::VeryUnhealthy, TEXT_VERY_UNHEALTHY.to_string()),
            (AqiLevel::Hazardous, TEXT_HAZARDOUS.to_string()),
        ]);
        AqiTable {
            thresholds,
            health_texts,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TableFile {
    #[serde(default)]
    health_texts: BTreeMap<String, String>,
    #[serde(flatten)]
    pollutants: BTreeMap<String, PollutantThresholds>,
}

impl AqiTable {
    /// Parses a threshold config. The document is an object keyed by
    /// pollutant (`pm10`, `pm25`, `so2`, `no2`, `o3`, `co`), each value
    /// holding `window_hours`, `boundaries` (four numbers) and an optional
    /// `unit`. An optional `health_texts` object keyed by level overrides the
    /// descriptions. Pollutants and levels not mentioned keep their defaults.
    pub fn from_json(json: &str) -> Result<Self, AqiError> {
        let file: TableFile =
            serde_json::from_str(json).map_err(|e| AqiError::Config(e.to_string()))?;
        let mut table = AqiTable::default();
        for (name, thresholds) in file.pollutants {
            let pollutant: Pollutant = name.parse()?;
            thresholds.validate(pollutant.key())?;
            table.thresholds.insert(pollutant, thresholds);
        }
        for (name, text) in file.health_texts {
            table.health_texts.insert(name.parse()?, text);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AqiError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| AqiError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn thresholds(&self, pollutant: Pollutant) -> &PollutantThresholds {
        &self.thresholds[&pollutant]
    }

    pub fn health_text(&self, level: AqiLevel) -> &str {
        self.health_texts.get(&level).map(String::as_str).unwrap_or("")
    }

    pub fn class_of(&self, level: AqiLevel) -> AqiClass {
        AqiClass {
            level,
            health_text: self.health_text(level).to_string(),
        }
    }

    pub fn classify(&self, pollutant: Pollutant, concentration: f64) -> Result<AqiClass, AqiError> {
        if concentration.is_nan() || concentration < 0.0 {
            return Err(AqiError::NegativeConcentration(concentration));
        }
        Ok(self.class_of(self.thresholds(pollutant).level(concentration)))
    }

    /// Mean over the pollutant's averaging window (ending at the newest
    /// point, inclusive) and its class.
    pub fn assess_series(
        &self,
        points: &[(Timestamp, f64)],
        pollutant: Pollutant,
    ) -> Result<SeriesAssessment, AqiError> {
        let last = points.iter().map(|p| p.0).max().ok_or(AqiError::EmptySeries)?;
        let window_hours = self.thresholds(pollutant).window_hours;
        let cutoff = last.epoch_seconds() - i64::from(window_hours) * 3600;
        let (sum, count) = points
            .iter()
            .filter(|(ts, _)| ts.epoch_seconds() > cutoff)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        let mean = sum / count as f64;
        Ok(SeriesAssessment {
            class: self.classify(pollutant, mean)?,
            mean,
            samples: count,
            window_hours,
            window_end: last,
        })
    }

    pub fn classify_series(
        &self,
        points: &[(Timestamp, f64)],
        pollutant: Pollutant,
    ) -> Result<AqiClass, AqiError> {
        self.assess_series(points, pollutant).map(|a| a.class)
    }

    pub fn classify_samples(&self, samples: &[ConcentrationSample]) -> Result<AqiClass, AqiError> {
        let points: Vec<(Timestamp, f64)> = samples.iter().map(|s| (s.timestamp, s.pm25)).collect();
        self.classify_series(&points, Pollutant::Pm25)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesAssessment {
    pub class: AqiClass,
    pub mean: f64,
    pub samples: usize,
    pub window_hours: u32,
    pub window_end: Timestamp,
}

/// Classifies against the default table.
pub fn classify(pollutant: Pollutant, concentration: f64) -> Result<AqiClass, AqiError> {
    AqiTable::default().classify(pollutant, concentration)
}
