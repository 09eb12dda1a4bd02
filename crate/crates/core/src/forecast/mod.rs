//! Next-step PM2.5 forecasting with a from-scratch LSTM.

pub mod activation;
pub mod adam;
pub mod alert;
pub mod dataset;
pub mod gradcheck;
pub mod lstm;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use activation::Activation;
pub use adam::{Adam, AdamConfig};
pub use alert::{predictive_alert, Alert};
pub use dataset::{make_windows, make_windows_with, split_series, MinMax, SplitDataset, WindowedDataset};
pub use gradcheck::{check_gradient, gradient_check, GradCheckReport};
pub use lstm::LstmParams;
pub use synthetic::SyntheticSeries;
pub use sweep::{sweep, write_sweep_csv, SweepCell, SweepGrid};
pub use train::{evaluate, persistence_baseline, train, Architecture, ErrorMetrics, ForecastModel, TrainConfig};

use crate::aqi::AqiError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error("series of length {len} is too short, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Aqi(#[from] AqiError),
}
