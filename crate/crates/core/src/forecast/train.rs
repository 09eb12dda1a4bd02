use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::adam::{Adam, AdamConfig};
use super::dataset::{MinMax, WindowedDataset, DEFAULT_WINDOW};
use super::lstm::LstmParams;
use super::ForecastError;
use crate::par::Exec;

pub const MODEL_FORMAT: &str = "pmsense-lstm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    /// The best configuration of the reference grid.
    fn default() -> Self {
        Architecture {
            hidden: 61,
            activation: Activation::Softmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub train_fraction: f64,
    pub window: usize,
    pub seed: u64,
    /// Examples per optimiser step; `None` means one full-batch step per
    /// epoch. Mini-batches are drawn from a per-epoch seeded shuffle.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            adam: AdamConfig::default(),
            train_fraction: 0.7,
            window: DEFAULT_WINDOW,
            seed: 0,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.epochs == 0 {
            return Err(ForecastError::InvalidConfig("epochs must be > 0".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ForecastError::InvalidConfig("train fraction must be in (0, 1)".into()));
        }
        if self.window == 0 {
            return Err(ForecastError::InvalidConfig("window must be > 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(ForecastError::InvalidConfig("batch size must be > 0".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(ForecastError::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// A trained network with everything needed to reproduce or apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub format: String,
    pub version: u32,
    pub params: LstmParams,
    pub norm: MinMax,
    pub config: TrainConfig,
    /// Mean training loss (normalised MSE) per epoch.
    pub history: Vec<f64>,
}

impl ForecastModel {
    pub fn new(params: LstmParams, norm: MinMax, config: TrainConfig) -> Self {
        ForecastModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            params,
            norm,
            config,
            history: Vec::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.config.window
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            hidden: self.params.hidden,
            activation: self.params.activation,
        }
    }

    /// Next-step prediction in concentration units from the last `window`
    /// raw readings.
    pub fn predict(&self, recent: &[f64]) -> Result<f64, ForecastError> {
        if recent.len() != self.window() {
            return Err(ForecastError::ShapeMismatch(format!(
                "model expects {} readings, got {}",
                self.window(),
                recent.len()
            )));
        }
        let x: Vec<f64> = recent.iter().map(|v| self.norm.normalize(*v)).collect();
        Ok(self.norm.denormalize(self.params.forward(&x)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(json: &str) -> Result<Self, ForecastError> {
        let model: ForecastModel =
            serde_json::from_str(json).map_err(|e| ForecastError::Model(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(ForecastError::Model(format!("unexpected format `{}`", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(ForecastError::Model(format!("unsupported version {}", model.version)));
        }
        LstmParams::from_values(model.params.hidden, model.params.activation, model.params.values.clone())?;
        if !model.params.is_finite() {
            return Err(ForecastError::Model("non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForecastError> {
        std::fs::write(path, self.to_json()).map_err(|e| ForecastError::Model(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForecastError> {
        let text = std::fs::read_to_string(path).map_err(|e| ForecastError::Model(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Adam on the MSE loss, backpropagating through time. Deterministic given
/// `config.seed`; the execution mode only changes speed.
pub fn train(
    dataset: &WindowedDataset,
    config: &TrainConfig,
    arch: Architecture,
    exec: Exec,
) -> Result<ForecastModel, ForecastError> {
    config.validate()?;
    if arch.hidden == 0 {
        return Err(ForecastError::InvalidConfig("hidden units must be > 0".into()));
    }
    if dataset.is_empty() {
        return Err(ForecastError::EmptySplit);
    }
    if dataset.window != config.window {
        return Err(ForecastError::ShapeMismatch(format!(
            "dataset window {} differs from config window {}",
            dataset.window, config.window
        )));
    }
    let mut params = LstmParams::init(arch.hidden, arch.activation, config.seed);
    let mut adam = Adam::new(config.adam, params.values.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let batch = config.batch_size.unwrap_or(dataset.len()).min(dataset.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if batch < dataset.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = params.loss_and_gradient(dataset, chunk, exec);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ForecastError::DivergedLoss { epoch: epoch + 1 });
            }
            weighted += loss * chunk.len() as f64;
            adam.step(&mut params.values, &grad);
        }
        history.push(weighted / dataset.len() as f64);
    }
    if !params.is_finite() {
        return Err(ForecastError::DivergedLoss { epoch: config.epochs });
    }
    let mut model = ForecastModel::new(params, dataset.norm, config.clone());
    model.history = history;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

impl ErrorMetrics {
    pub fn from_predictions(predictions: &[f64], targets: &[f64]) -> Result<Self, ForecastError> {
        if predictions.is_empty() {
            return Err(ForecastError::EmptySplit);
        }
        if predictions.len() != targets.len() {
            return Err(ForecastError::ShapeMismatch(format!(
                "{} predictions for {} targets",
                predictions.len(),
                targets.len()
            )));
        }
        let n = predictions.len() as f64;
        let (abs, sq) = predictions
            .iter()
            .zip(targets)
            .fold((0.0, 0.0), |(a, s), (p, t)| {
                let e = p - t;
                (a + e.abs(), s + e * e)
            });
        let mse = sq / n;
        Ok(ErrorMetrics {
            mae: abs / n,
            mse,
            rmse: mse.sqrt(),
        })
    }
}

/// Metrics in concentration units on `test`.
pub fn evaluate(model: &ForecastModel, test: &WindowedDataset, exec: Exec) -> Result<ErrorMetrics, ForecastError> {
    if test.is_empty() {
        return Err(ForecastError::EmptySplit);
    }
    if test.window != model.window() {
        return Err(ForecastError::ShapeMismatch("test window differs from model window".into()));
    }
    let preds: Vec<f64> = model
        .params
        .predict_dataset(test, exec)
        .into_iter()
        .map(|y| model.norm.denormalize(y))
        .collect();
    ErrorMetrics::from_predictions(&preds, &test.denormalized_targets())
}

/// Metrics of the forecaster that repeats the last reading.
pub fn persistence_baseline(data: &WindowedDataset) -> Result<ErrorMetrics, ForecastError> {
    let preds: Vec<f64> = data
        .examples()
        .map(|(x, _)| data.norm.denormalize(*x.last().expect("window > 0")))
        .collect();
    ErrorMetrics::from_predictions(&preds, &data.denormalized_targets())
}
