//! Low-cost particulate-matter monitoring toolkit.
//!
//! The crate is organised around the data path of a participatory sensing
//! deployment:
//!
//! * [`sensing`] turns dust-sensor low-pulse-occupancy readings into PM2.5
//!   mass concentrations and can run the pipeline backwards to synthesise
//!   raw readings from a target concentration.
//! * [`aqi`] maps concentrations onto the five-level air-quality index.
//! * [`timeseries`] stores channel streams, enforces write rate policy and
//!   aggregates samples into fixed buckets; CSV import/export lives here too.
//! * [`compare`] lines device series up against reference-station series.
//! * [`forecast`] is a from-scratch single-layer LSTM regressor with Adam
//!   training, evaluation metrics, hyperparameter sweeps and alerts.
//!
//! Batch work (fleet simulation, bulk conversion, aggregation, gradient
//! accumulation, sweeps) goes through [`par::Exec`], which uses rayon when
//! the `parallel` feature is enabled and falls back to plain iteration
//! otherwise. Both modes produce bit-identical results.

pub mod aqi;
pub mod compare;
pub mod forecast;
pub mod par;
pub mod sensing;
pub mod time;
pub mod timeseries;

pub use aqi::{AqiClass, AqiLevel, AqiTable, Pollutant};
pub use par::Exec;
pub use sensing::{ConcentrationSample, ParticleModel, RawSample};
pub use time::Timestamp;
