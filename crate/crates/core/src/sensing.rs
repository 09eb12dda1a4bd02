//! Dust-sensor signal model and the raw-to-mass conversion pipeline.
//!
//! The sensor reports Low Pulse Occupancy (LPO): how long its output was
//! held low during a sampling window. The pipeline is
//!
//! ```text
//! LPO time ──► low ratio [%] ──► particle count [pcs/0.01 ft³] ──► PM [µg/m³]
//! ```
//!
//! The count step is the manufacturer's cubic fit; the mass step assumes
//! spherical particles of fixed density and radius, with `3531.5` converting
//! pcs/0.01 ft³ to pcs/m³ (100 × 35.315 ft³/m³). Density is in µg/m³ and
//! radius in metres so the result lands in µg/m³.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::Exec;
use crate::time::Timestamp;

/// Default LPO sampling window, seconds.
pub const DEFAULT_WINDOW_SECS: f64 = 30.0;

const COEF_CUBIC: f64 = 1.1;
const COEF_QUADRATIC: f64 = -3.8;
const COEF_LINEAR: f64 = 520.0;
const COEF_CONSTANT: f64 = 0.62;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensingError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("low ratio {0} % is outside [0, 100]")]
    DomainError(f64),
    #[error("{requested} µg/m³ exceeds the pipeline maximum of {max} µg/m³")]
    NotInvertible { requested: f64, max: f64 },
}

/// One LPO reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp: Timestamp,
    pub sensor_id: String,
    /// Sampling window length, seconds.
    pub window_duration: f64,
    /// Time the sensor output was low inside the window, seconds.
    pub low_pulse_time: f64,
}

impl RawSample {
    pub fn new(window_duration: f64, low_pulse_time: f64) -> Self {
        RawSample {
            timestamp: Timestamp::default(),
            sensor_id: String::new(),
            window_duration,
            low_pulse_time,
        }
    }

    pub fn at(mut self, timestamp: Timestamp) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn from_sensor(mut self, sensor_id: impl Into<String>) -> Self {
        self.sensor_id = sensor_id.into();
        self
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.window_duration.is_finite() && self.window_duration > 0.0) {
            return Err(SensingError::InvalidSample(format!(
                "window duration must be > 0 s, got {}",
                self.window_duration
            )));
        }
        if !(self.low_pulse_time.is_finite() && self.low_pulse_time >= 0.0) {
            return Err(SensingError::InvalidSample(format!(
                "low pulse time must be >= 0 s, got {}",
                self.low_pulse_time
            )));
        }
        if self.low_pulse_time > self.window_duration {
            return Err(SensingError::InvalidSample(format!(
                "low pulse time {} s exceeds window {} s",
                self.low_pulse_time, self.window_duration
            )));
        }
        Ok(())
    }
}

/// Occupancy as a percentage of the sampling window, in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LowRatio(f64);

impl LowRatio {
    pub fn new(percent: f64) -> Result<Self, SensingError> {
        if (0.0..=100.0).contains(&percent) {
            Ok(LowRatio(percent))
        } else {
            Err(SensingError::DomainError(percent))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Particle count concentration in pcs/0.01 ft³.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ParticleCount(f64);

impl ParticleCount {
    pub fn new(value: f64) -> Result<Self, SensingError> {
        if value.is_finite() && value >= 0.0 {
            Ok(ParticleCount(value))
        } else {
            Err(SensingError::InvalidSample(format!(
                "particle count must be finite and >= 0, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Spherical-particle mass model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticleModel {
    /// µg/m³
    pub density: f64,
    /// metres
    pub radius: f64,
    /// pcs/0.01 ft³ → pcs/m³
    pub count_to_m3_factor: f64,
}

impl Default for ParticleModel {
    fn default() -> Self {
        ParticleModel {
            density: 1.65e12,
            radius: 0.44e-6,
            count_to_m3_factor: 3531.5,
        }
    }
}

impl ParticleModel {
    /// PM2.5 defaults with a different particle radius (used for PM1.0).
    pub fn with_radius(radius: f64) -> Self {
        ParticleModel {
            radius,
            ..Default::default()
        }
    }

    /// Sphere volume, m³.
    pub fn volume(&self) -> f64 {
        let r = self.radius;
        4.0 / 3.0 * PI * r * r * r
    }

    /// Mass of one particle, µg.
    pub fn unit_mass(&self) -> f64 {
        self.density * self.volume()
    }

    fn is_valid(&self) -> bool {
        [self.density, self.radius, self.count_to_m3_factor]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// A converted reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSample {
    pub timestamp: Timestamp,
    /// µg/m³
    pub pm25: f64,
    /// µg/m³, only when a PM1.0 particle model is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm1: Option<f64>,
    pub sensor_id: String,
    #[serde(default)]
    pub location: String,
}

pub fn low_ratio(raw: &RawSample) -> Result<LowRatio, SensingError> {
    raw.validate()?;
    LowRatio::new(100.0 * raw.low_pulse_time / raw.window_duration)
}

/// Cubic count fit evaluated at `r` percent, in Horner form.
fn count_polynomial(r: f64) -> f64 {
    ((COEF_CUBIC * r + COEF_QUADRATIC) * r + COEF_LINEAR) * r + COEF_CONSTANT
}

fn count_polynomial_derivative(r: f64) -> f64 {
    (3.0 * COEF_CUBIC * r + 2.0 * COEF_QUADRATIC) * r + COEF_LINEAR
}

pub fn count_concentration(ratio: LowRatio) -> ParticleCount {
    // Positive on [0, 100]: the constant term is positive and the slope never
    // drops below 520 - 3.8²/3.3.
    ParticleCount(count_polynomial(ratio.value()))
}

/// Range-checked variant for callers holding a bare percentage.
pub fn count_concentration_percent(percent: f64) -> Result<ParticleCount, SensingError> {
    LowRatio::new(percent).map(count_concentration)
}

/// Mass concentration in µg/m³.
pub fn mass_concentration(count: ParticleCount, model: &ParticleModel) -> f64 {
    count.value() * model.count_to_m3_factor * model.unit_mass()
}

/// Full raw-to-PM2.5 conversion with the default single-model pipeline.
pub fn convert(raw: &RawSample, model: &ParticleModel) -> Result<ConcentrationSample, SensingError> {
    Converter::new(*model).convert(raw)
}

/// Conversion pipeline with an optional second (PM1.0) output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Converter {
    pub pm25: ParticleModel,
    #[serde(default)]
    pub pm1: Option<ParticleModel>,
}

impl Converter {
    pub fn new(pm25: ParticleModel) -> Self {
        Converter { pm25, pm1: None }
    }

    pub fn with_pm1(mut self, model: ParticleModel) -> Self {
        self.pm1 = Some(model);
        self
    }

    pub fn convert(&self, raw: &RawSample) -> Result<ConcentrationSample, SensingError> {
        if !self.pm25.is_valid() || self.pm1.is_some_and(|m| !m.is_valid()) {
            return Err(SensingError::InvalidSample(
                "particle model parameters must be finite and > 0".into(),
            ));
        }
        let count = count_concentration(low_ratio(raw)?);
        Ok(ConcentrationSample {
            timestamp: raw.timestamp,
            pm25: mass_concentration(count, &self.pm25),
            pm1: self.pm1.map(|m| mass_concentration(count, &m)),
            sensor_id: raw.sensor_id.clone(),
            location: String::new(),
        })
    }

    pub fn convert_batch(
        &self,
        raws: &[RawSample],
        exec: Exec,
    ) -> Vec<Result<ConcentrationSample, SensingError>> {
        exec.map(raws, |raw| self.convert(raw))
    }
}

/// Largest concentration the pipeline can report (ratio 100 %).
pub fn max_concentration(model: &ParticleModel) -> f64 {
    mass_concentration(ParticleCount(count_polynomial(100.0)), model)
}

/// Smallest concentration the pipeline can report (ratio 0 %).
pub fn min_concentration(model: &ParticleModel) -> f64 {
    mass_concentration(ParticleCount(COEF_CONSTANT), model)
}

/// Seeded multiplicative noise: the target concentration is scaled by
/// `1 + amplitude·u` with `u` uniform in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub amplitude: f64,
    pub seed: u64,
}

impl Noise {
    pub fn none() -> Option<Noise> {
        None
    }

    fn factor(&self, stream: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        1.0 + self.amplitude * rng.gen_range(-1.0..=1.0)
    }
}

/// Solves `count_polynomial(r) = target` for `r` in `[0, 100]`.
/// Safeguarded Newton: falls back to bisection whenever a step leaves the
/// bracket.
fn invert_count(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 100.0_f64);
    let mut r = ((target - COEF_CONSTANT) / COEF_LINEAR).clamp(lo, hi);
    for _ in 0..100 {
        let residual = count_polynomial(r) - target;
        if residual == 0.0 {
            return r;
        }
        if residual > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let mut next = r - residual / count_polynomial_derivative(r);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-15 * r.abs().max(1.0) {
            return next;
        }
        r = next;
    }
    r
}

/// Produces a raw reading whose conversion yields `true_pm25`.
///
/// Concentrations below the pipeline floor (ratio 0) clamp to zero
/// occupancy. With noise, the perturbed target is clamped into the
/// representable range.
pub fn simulate_raw(
    true_pm25: f64,
    model: &ParticleModel,
    window: f64,
    noise: Option<Noise>,
) -> Result<RawSample, SensingError> {
    simulate_raw_indexed(true_pm25, model, window, noise, 0)
}

/// [`simulate_raw`] drawing noise from RNG stream `stream`, so each sample
/// of a batch gets independent noise that does not depend on evaluation
/// order.
pub fn simulate_raw_indexed(
    true_pm25: f64,
    model: &ParticleModel,
    window: f64,
    noise: Option<Noise>,
    stream: u64,
) -> Result<RawSample, SensingError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(SensingError::InvalidSample(format!(
            "window duration must be > 0 s, got {window}"
        )));
    }
    if !(true_pm25.is_finite() && true_pm25 >= 0.0) {
        return Err(SensingError::InvalidSample(format!(
            "concentration must be finite and >= 0, got {true_pm25}"
        )));
    }
    let max = max_concentration(model);
    if true_pm25 > max {
        return Err(SensingError::NotInvertible {
            requested: true_pm25,
            max,
        });
    }
    let target = match noise {
        Some(n) if n.amplitude > 0.0 => (true_pm25 * n.factor(stream)).clamp(0.0, max),
        _ => true_pm25,
    };
    let count = target / (model.count_to_m3_factor * model.unit_mass());
    let ratio = if count <= COEF_CONSTANT {
        0.0
    } else {
        invert_count(count)
    };
    Ok(RawSample::new(window, ratio / 100.0 * window))
}

/// One simulated reading of a fleet run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedReading {
    pub raw: RawSample,
    pub converted: ConcentrationSample,
}

/// Simulates and converts a batch of `(timestamp, true concentration)`
/// targets for one sensor. Sample `k` uses noise stream `k`.
pub fn simulate_series(
    targets: &[(Timestamp, f64)],
    sensor_id: &str,
    converter: &Converter,
    window: f64,
    noise: Option<Noise>,
    exec: Exec,
) -> Result<Vec<SimulatedReading>, SensingError> {
    let indexed: Vec<(usize, &(Timestamp, f64))> = targets.iter().enumerate().collect();
    exec.map(&indexed, |(k, (ts, c))| {
        let raw = simulate_raw_indexed(*c, &converter.pm25, window, noise, *k as u64)?
            .at(*ts)
            .from_sensor(sensor_id);
        let converted = converter.convert(&raw)?;
        Ok(SimulatedReading { raw, converted })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation of the count fit, straight from the textbook
    /// polynomial with explicit powers.
    fn oracle_count(r: f64) -> f64 {
        1.1 * r.powi(3) - 3.8 * r.powi(2) + 520.0 * r + 0.62
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn low_ratio_examples() {
        assert_eq!(low_ratio(&RawSample::new(30.0, 0.0)).unwrap().value(), 0.0);
        assert_eq!(low_ratio(&RawSample::new(30.0, 30.0)).unwrap().value(), 100.0);
        assert!((low_ratio(&RawSample::new(30.0, 3.0)).unwrap().value() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn low_ratio_rejects_bad_samples() {
        for raw in [
            RawSample::new(30.0, 31.0),
            RawSample::new(0.0, 0.0),
            RawSample::new(-5.0, 1.0),
            RawSample::new(30.0, -1.0),
            RawSample::new(f64::NAN, 1.0),
        ] {
            assert!(matches!(low_ratio(&raw), Err(SensingError::InvalidSample(_))), "{raw:?}");
        }
    }

    #[test]
    fn count_examples() {
        let at = |p: f64| count_concentration(LowRatio::new(p).unwrap()).value();
        assert_eq!(at(0.0), 0.62);
        assert!((at(1.0) - 517.92).abs() < 1e-9);
        assert!((at(10.0) - 5920.62).abs() < 1e-9);
        assert!(matches!(count_concentration_percent(100.5), Err(SensingError::DomainError(_))));
        assert!(matches!(count_concentration_percent(-0.1), Err(SensingError::DomainError(_))));
    }

    #[test]
    fn count_matches_oracle_on_grid() {
        for k in 0..=1000 {
            let r = k as f64 / 10.0;
            let got = count_concentration(LowRatio::new(r).unwrap()).value();
            assert!(rel(got, oracle_count(r)) <= 1e-12, "r={r}");
        }
    }

    #[test]
    fn unit_mass_matches_sphere_oracle() {
        // (4/3)·π·(4.4e-7 m)³ = 3.568e-19 m³; × 1.65e12 µg/m³
        let oracle = 1.65e12 * (4.0 / 3.0) * std::f64::consts::PI * 4.4e-7_f64 * 4.4e-7 * 4.4e-7;
        let model = ParticleModel::default();
        assert!(rel(model.unit_mass(), oracle) <= 1e-12);
        assert!((model.unit_mass() - 5.8875e-7).abs() / 5.8875e-7 < 1e-4);
    }

    #[test]
    fn mass_examples() {
        let model = ParticleModel::default();
        assert_eq!(mass_concentration(ParticleCount::new(0.0).unwrap(), &model), 0.0);
        let m = mass_concentration(ParticleCount::new(517.92).unwrap(), &model);
        assert!((m - 1.0768).abs() < 1e-4, "{m}");
    }

    #[test]
    fn convert_examples() {
        let model = ParticleModel::default();
        let raw = RawSample::new(30.0, 0.0)
            .at(Timestamp(1_567_000_000))
            .from_sensor("enseada-1");
        let s = convert(&raw, &model).unwrap();
        assert!(rel(s.pm25, 0.62 * 3531.5 * model.unit_mass()) < 1e-12);
        assert_eq!(s.timestamp, Timestamp(1_567_000_000));
        assert_eq!(s.sensor_id, "enseada-1");
        assert_eq!(s.pm1, None);

        let full = convert(&RawSample::new(30.0, 30.0), &model).unwrap();
        assert!(rel(full.pm25, oracle_count(100.0) * 3531.5 * model.unit_mass()) < 1e-12);
        assert_eq!(full.pm25, max_concentration(&model));

        assert!(matches!(
            convert(&RawSample::new(30.0, 31.0), &model),
            Err(SensingError::InvalidSample(_))
        ));
    }

    #[test]
    fn pm1_channel_uses_its_own_radius() {
        let conv = Converter::default().with_pm1(ParticleModel::with_radius(0.25e-6));
        let s = conv.convert(&RawSample::new(30.0, 3.0)).unwrap();
        let ratio = (0.25_f64 / 0.44).powi(3);
        assert!(rel(s.pm1.unwrap(), s.pm25 * ratio) < 1e-12);
    }

    #[test]
    fn simulate_round_trip_and_clamp() {
        let model = ParticleModel::default();
        let raw = simulate_raw(10.0, &model, 30.0, None).unwrap();
        let back = convert(&raw, &model).unwrap().pm25;
        assert!(rel(back, 10.0) <= 1e-6, "{back}");

        let zero = simulate_raw(0.0, &model, 30.0, None).unwrap();
        assert_eq!(zero.low_pulse_time, 0.0);

        let max = max_concentration(&model);
        assert!(matches!(
            simulate_raw(max * 1.01, &model, 30.0, None),
            Err(SensingError::NotInvertible { .. })
        ));
        let top = simulate_raw(max, &model, 30.0, None).unwrap();
        assert!(top.low_pulse_time <= top.window_duration);
    }

    #[test]
    fn simulate_noise_is_seeded_and_bounded() {
        let model = ParticleModel::default();
        let noise = Some(Noise { amplitude: 0.1, seed: 42 });
        let a = simulate_raw(50.0, &model, 30.0, noise).unwrap();
        let b = simulate_raw(50.0, &model, 30.0, noise).unwrap();
        assert_eq!(a, b);
        let c = convert(&a, &model).unwrap().pm25;
        assert!((45.0 - 1e-9..=55.0 + 1e-9).contains(&c), "{c}");
        let other = simulate_raw(50.0, &model, 30.0, Some(Noise { amplitude: 0.1, seed: 43 })).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn batch_simulation_is_mode_independent() {
        let conv = Converter::default();
        let targets: Vec<(Timestamp, f64)> =
            (0..500).map(|k| (Timestamp(k * 30), 5.0 + (k % 17) as f64)).collect();
        let noise = Some(Noise { amplitude: 0.05, seed: 7 });
        let seq = simulate_series(&targets, "s", &conv, 30.0, noise, Exec::Sequential).unwrap();
        let par = simulate_series(&targets, "s", &conv, 30.0, noise, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq[3].converted.timestamp, Timestamp(90));
    }
}
