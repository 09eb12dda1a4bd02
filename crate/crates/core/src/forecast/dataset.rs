//! Sliding-window supervised examples.

use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Default number of past readings per example.
pub const DEFAULT_WINDOW: usize = 9;

/// Min-max scaling to `[0, 1]`. A constant range scales by one, so the
/// transform degenerates to a shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        MinMax { min, max }
    }

    pub fn identity() -> Self {
        MinMax { min: 0.0, max: 1.0 }
    }

    fn scale(&self) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            span
        } else {
            1.0
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / self.scale()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.scale() + self.min
    }
}

/// Normalised examples: row `k` of `inputs` holds `window` consecutive
/// readings and `targets[k]` the reading that follows them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub window: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub norm: MinMax,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn example(&self, k: usize) -> (&[f64], f64) {
        (&self.inputs[k * self.window..(k + 1) * self.window], self.targets[k])
    }

    pub fn examples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs.chunks_exact(self.window).zip(self.targets.iter().copied())
    }

    pub fn denormalized_targets(&self) -> Vec<f64> {
        self.targets.iter().map(|t| self.norm.denormalize(*t)).collect()
    }
}

/// Windows `series` using the given scaling.
pub fn make_windows_with(series: &[f64], window: usize, norm: MinMax) -> Result<WindowedDataset, ForecastError> {
    if window == 0 {
        return Err(ForecastError::InvalidConfig("window must be > 0".into()));
    }
    if series.len() <= window {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            needed: window + 1,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidConfig("series contains non-finite values".into()));
    }
    let scaled: Vec<f64> = series.iter().map(|v| norm.normalize(*v)).collect();
    let n = series.len() - window;
    let mut inputs = Vec::with_capacity(n * window);
    for k in 0..n {
        inputs.extend_from_slice(&scaled[k..k + window]);
    }
    Ok(WindowedDataset {
        window,
        inputs,
        targets: scaled[window..].to_vec(),
        norm,
    })
}

/// Windows `series`, fitting the scaling on the whole of it.
pub fn make_windows(series: &[f64], window: usize) -> Result<WindowedDataset, ForecastError> {
    make_windows_with(series, window, MinMax::fit(series))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub norm: MinMax,
}

/// Chronological split: the first `train_fraction` of the examples train,
/// the rest test. Scaling is fit on the readings the training examples
/// touch, never on test data.
pub fn split_series(series: &[f64], window: usize, train_fraction: f64) -> Result<SplitDataset, ForecastError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ForecastError::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if series.len() < window + 2 {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            needed: window + 2,
        });
    }
    let examples = series.len() - window;
    let n_train = ((examples as f64 * train_fraction).floor() as usize).clamp(1, examples - 1);
    let norm = MinMax::fit(&series[..n_train + window]);
    let train = make_windows_with(&series[..n_train + window], window, norm)?;
    let test = make_windows_with(&series[n_train..], window, norm)?;
    Ok(SplitDataset { train, test, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_counts() {
        let s: Vec<f64> = (0..12).map(f64::from).collect();
        let d = make_windows(&s, 9).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.example(2).0.len(), 9);

        let s: Vec<f64> = (0..10).map(f64::from).collect();
        let d = make_windows(&s, 9).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.norm.denormalize(d.targets[0]), 9.0);

        assert!(matches!(
            make_windows(&s[..9], 9),
            Err(ForecastError::SeriesTooShort { len: 9, .. })
        ));
    }

    #[test]
    fn constant_series() {
        let d = make_windows(&[4.2; 15], 9).unwrap();
        assert!(d.inputs.iter().all(|x| *x == d.inputs[0]));
        assert!(d.targets.iter().all(|t| *t == d.targets[0]));
        assert_eq!(d.norm.denormalize(d.targets[0]), 4.2);
    }

    #[test]
    fn split_fits_on_train_only() {
        let mut s: Vec<f64> = (0..100).map(|k| (k % 10) as f64).collect();
        s[95] = 1000.0;
        let sp = split_series(&s, 9, 0.7).unwrap();
        assert_eq!(sp.train.len() + sp.test.len(), 91);
        assert_eq!(sp.train.len(), 63);
        assert_eq!(sp.norm.max, 9.0);
        assert!(sp.train.inputs.iter().all(|x| (0.0..=1.0).contains(x)));
        // first test target follows the last training target
        let last_train = sp.norm.denormalize(*sp.train.targets.last().unwrap());
        let first_test = sp.norm.denormalize(sp.test.targets[0]);
        assert_eq!(last_train, s[9 + 62]);
        assert_eq!(first_test, s[9 + 63]);
    }

    proptest! {
        #[test]
        fn example_count_and_range(len in 10usize..200, window in 1usize..9, seed in 0u64..1000) {
            let s: Vec<f64> = (0..len).map(|k| ((k as u64 * 2654435761 + seed) % 97) as f64 * 0.37).collect();
            let d = make_windows(&s, window).unwrap();
            prop_assert_eq!(d.len(), len - window);
            prop_assert!(d.inputs.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn norm_round_trip(lo in -100.0f64..100.0, span in 1e-3f64..1e3, t in 0.0f64..1.0) {
            let norm = MinMax { min: lo, max: lo + span };
            let x = lo + t * span;
            let back = norm.denormalize(norm.normalize(x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(span));
        }
    }
}
