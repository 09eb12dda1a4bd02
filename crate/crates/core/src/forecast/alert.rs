use serde::Serialize;

use super::train::ForecastModel;
use super::ForecastError;
use crate::aqi::{AqiClass, AqiLevel, AqiTable, Pollutant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alert {
    pub predicted: f64,
    pub class: AqiClass,
}

/// Predicts the next PM2.5 reading and raises an alert when its class is at
/// or above `threshold`.
pub fn predictive_alert(
    model: &ForecastModel,
    recent: &[f64],
    threshold: AqiLevel,
    table: &AqiTable,
) -> Result<Option<Alert>, ForecastError> {
    let predicted = model.predict(recent)?;
    // a network can extrapolate slightly below zero; concentrations can't
    let class = table.classify(Pollutant::Pm25, predicted.max(0.0))?;
    Ok((class.level >= threshold).then_some(Alert { predicted, class }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::activation::Activation;
    use crate::forecast::dataset::MinMax;
    use crate::forecast::lstm::LstmParams;
    use crate::forecast::train::TrainConfig;

    /// A network that always predicts `value`.
    fn constant_model(value: f64) -> ForecastModel {
        let norm = MinMax { min: 0.0, max: 100.0 };
        let mut p = LstmParams::zeros(4, Activation::Tanh);
        p.set_output_bias(norm.normalize(value));
        ForecastModel::new(p, norm, TrainConfig::default())
    }

    #[test]
    fn alerts() {
        let table = AqiTable::default();
        let recent = [5.0; 9];
        let a = predictive_alert(&constant_model(28.7), &recent, AqiLevel::Moderate, &table).unwrap();
        let a = a.expect("alert");
        assert!((a.predicted - 28.7).abs() < 1e-12);
        assert_eq!(a.class.level, AqiLevel::Moderate);

        assert_eq!(
            predictive_alert(&constant_model(3.9), &recent, AqiLevel::Moderate, &table).unwrap(),
            None
        );
        assert_eq!(
            predictive_alert(&constant_model(100.0), &recent, AqiLevel::Hazardous, &table).unwrap(),
            None
        );
        assert!(predictive_alert(&constant_model(1.0), &[1.0; 3], AqiLevel::Good, &table).is_err());
    }
}
