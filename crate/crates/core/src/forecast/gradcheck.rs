//! Finite-difference verification of analytic gradients.

use serde::Serialize;

use super::dataset::WindowedDataset;
use super::lstm::LstmParams;
use crate::par::Exec;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares `analytic` with central differences of `loss` around `x`.
/// The error per coordinate is `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn check_gradient<F>(loss: F, x: &[f64], analytic: &[f64], h: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match parameters");
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: x.len(),
    };
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let plus = loss(&probe);
        probe[k] = x[k] - h;
        let minus = loss(&probe);
        probe[k] = x[k];
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if err > report.max_relative_error || k == 0 {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: k,
                analytic: a,
                numeric,
                checked: x.len(),
            };
        }
    }
    report
}

/// BPTT gradient of the dataset MSE against central differences.
pub fn gradient_check(params: &LstmParams, data: &WindowedDataset, h: f64) -> GradCheckReport {
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, grad) = params.loss_and_gradient(data, &idx, Exec::Sequential);
    let loss = |values: &[f64]| {
        let p = LstmParams {
            hidden: params.hidden,
            activation: params.activation,
            values: values.to_vec(),
        };
        p.loss(data, Exec::Sequential)
    };
    check_gradient(loss, &params.values, &grad, h)
}
