//! Hyperparameter grid search.

use std::cmp::Ordering;
use std::io::Write;

use serde::Serialize;

use super::activation::Activation;
use super::dataset::SplitDataset;
use super::train::{evaluate, train, Architecture, ErrorMetrics, TrainConfig};
use super::ForecastError;
use crate::par::Exec;

pub const SWEEP_CSV_HEADER: &str = "hidden,activation,epochs,seed,mae,mse,rmse";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub epochs: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Hidden sizes 25–100, all four activations, 100–1000 epochs.
    pub fn reference() -> Self {
        SweepGrid {
            hidden: vec![25, 50, 61, 75, 100],
            activations: Activation::ALL.to_vec(),
            epochs: vec![100, 200, 500, 1000],
            seeds: vec![0],
        }
    }

    pub fn cells(&self) -> Vec<SweepCellSpec> {
        let mut out = Vec::new();
        for &hidden in &self.hidden {
            for &activation in &self.activations {
                for &epochs in &self.epochs {
                    for &seed in &self.seeds {
                        out.push(SweepCellSpec {
                            arch: Architecture { hidden, activation },
                            epochs,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCellSpec {
    pub arch: Architecture,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub spec: SweepCellSpec,
    pub outcome: Result<ErrorMetrics, String>,
}

impl SweepCell {
    fn rmse(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|m| m.rmse).filter(|r| !r.is_nan())
    }
}

/// Ranking: lowest test RMSE first; ties go to fewer epochs, then fewer
/// hidden units. Failed cells sort last.
fn rank(a: &SweepCell, b: &SweepCell) -> Ordering {
    let by_rmse = match (a.rmse(), b.rmse()) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_rmse
        .then(a.spec.epochs.cmp(&b.spec.epochs))
        .then(a.spec.arch.hidden.cmp(&b.spec.arch.hidden))
        .then(a.spec.arch.activation.cmp(&b.spec.arch.activation))
        .then(a.spec.seed.cmp(&b.spec.seed))
}

pub fn rank_cells(cells: &mut [SweepCell]) {
    cells.sort_by(rank);
}

/// Trains every grid cell on `data.train`, scores it on `data.test` and
/// returns the cells ranked. A failing cell is recorded, not fatal.
pub fn sweep(
    grid: &SweepGrid,
    data: &SplitDataset,
    base: &TrainConfig,
    exec: Exec,
) -> Result<Vec<SweepCell>, ForecastError> {
    let specs = grid.cells();
    if specs.is_empty() {
        return Err(ForecastError::InvalidConfig("empty sweep grid".into()));
    }
    // cells run side by side; each trains sequentially
    let mut cells = exec.map(&specs, |spec| {
        let config = TrainConfig {
            epochs: spec.epochs,
            seed: spec.seed,
            ..base.clone()
        };
        let outcome = train(&data.train, &config, spec.arch, Exec::Sequential)
            .and_then(|m| evaluate(&m, &data.test, Exec::Sequential))
            .map_err(|e| e.to_string());
        SweepCell { spec: *spec, outcome }
    });
    rank_cells(&mut cells);
    Ok(cells)
}

pub fn write_sweep_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for c in cells {
        let metrics = match &c.outcome {
            Ok(m) => format!("{},{},{}", m.mae, m.mse, m.rmse),
            Err(_) => ",,".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            c.spec.arch.hidden, c.spec.arch.activation, c.spec.epochs, c.spec.seed, metrics
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::dataset::split_series;

    fn cell(hidden: usize, epochs: usize, rmse: Option<f64>) -> SweepCell {
        SweepCell {
            spec: SweepCellSpec {
                arch: Architecture { hidden, activation: Activation::Tanh },
                epochs,
                seed: 0,
            },
            outcome: rmse
                .map(|r| ErrorMetrics { mae: r, mse: r * r, rmse: r })
                .ok_or_else(|| "diverged".to_string()),
        }
    }

    #[test]
    fn tie_break_prefers_fewer_epochs_then_smaller_hidden() {
        let mut cells = vec![
            cell(50, 200, Some(1.0)),
            cell(25, 200, Some(1.0)),
            cell(100, 100, Some(1.0)),
            cell(25, 100, None),
            cell(61, 1000, Some(0.5)),
        ];
        rank_cells(&mut cells);
        let order: Vec<(usize, usize)> = cells.iter().map(|c| (c.spec.arch.hidden, c.spec.epochs)).collect();
        assert_eq!(order, vec![(61, 1000), (100, 100), (25, 200), (50, 200), (25, 100)]);
    }

    #[test]
    fn small_grids() {
        let s: Vec<f64> = (0..60).map(|k| (k as f64 * 0.5).sin() + 2.0).collect();
        let data = split_series(&s, 9, 0.7).unwrap();
        let base = TrainConfig::default();
        let one = SweepGrid {
            hidden: vec![3],
            activations: vec![Activation::Tanh],
            epochs: vec![2],
            seeds: vec![1],
        };
        let r = sweep(&one, &data, &base, Exec::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].outcome.is_ok());

        let two_seeds = SweepGrid { seeds: vec![1, 2], ..one.clone() };
        let r = sweep(&two_seeds, &data, &base, Exec::default()).unwrap();
        let mut seeds: Vec<u64> = r.iter().map(|c| c.spec.seed).collect();
        seeds.sort();
        assert_eq!(seeds, vec![1, 2]);

        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &r).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(SWEEP_CSV_HEADER));

        let empty = SweepGrid { hidden: vec![], ..one };
        assert!(sweep(&empty, &data, &base, Exec::default()).is_err());
    }

    #[test]
    fn failing_cell_does_not_abort() {
        let s: Vec<f64> = (0..60).map(|k| (k % 7) as f64).collect();
        let data = split_series(&s, 9, 0.7).unwrap();
        let grid = SweepGrid {
            hidden: vec![0, 2],
            activations: vec![Activation::Relu],
            epochs: vec![2],
            seeds: vec![0],
        };
        let r = sweep(&grid, &data, &TrainConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[0].outcome.is_ok());
        assert!(r[1].outcome.is_err());
    }
}
