//! Two-stage classifiers where the first dimension's label is appended to the
//! input of the second.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{predict, train_smo, Prediction, RbfParams, SmoConfig, SvmError, TrainedSvm};
use crate::signal::BinaryLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainDirection {
    /// Arousal first, then valence given arousal.
    #[serde(rename = "valaro", alias = "VALARO")]
    ValAro,
    /// Valence first, then arousal given valence.
    #[serde(rename = "aroval", alias = "AROVAL")]
    AroVal,
}

impl fmt::Display for ChainDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainDirection::ValAro => "VALARO",
            ChainDirection::AroVal => "AROVAL",
        })
    }
}

impl FromStr for ChainDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "valaro" => Ok(ChainDirection::ValAro),
            "aroval" => Ok(ChainDirection::AroVal),
            _ => Err(format!("unknown chain direction `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainedModel {
    pub direction: ChainDirection,
    /// Sees only the band features.
    pub first: TrainedSvm,
    /// Sees the band features plus the first stage's label.
    pub second: TrainedSvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainedPrediction {
    pub valence: Prediction,
    pub arousal: Prediction,
}

fn with_condition(x: ArrayView2<'_, f64>, labels: &[BinaryLabel]) -> Array2<f64> {
    let column = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| labels[i].one_hot());
    ndarray::concatenate(Axis(1), &[x, column.view()]).expect("row counts match")
}

/// Trains both stages. The second stage is fitted on true first-dimension
/// labels; predicted labels are only used at inference.
pub fn train_chained(
    x: ArrayView2<'_, f64>,
    y_val: &[BinaryLabel],
    y_aro: &[BinaryLabel],
    direction: ChainDirection,
    params: RbfParams,
    config: &SmoConfig,
) -> Result<ChainedModel, SvmError> {
    for labels in [y_val, y_aro] {
        if labels.len() != x.nrows() {
            return Err(SvmError::LabelCount {
                samples: x.nrows(),
                labels: labels.len(),
            });
        }
    }
    let (first_y, second_y) = match direction {
        ChainDirection::ValAro => (y_aro, y_val),
        ChainDirection::AroVal => (y_val, y_aro),
    };
    let first = train_smo(x, first_y, params, config)?;
    let conditioned = with_condition(x, first_y);
    let second = train_smo(conditioned.view(), second_y, params, config)?;
    Ok(ChainedModel {
        direction,
        first,
        second,
    })
}

pub fn predict_chained(model: &ChainedModel, x: &[f64]) -> Result<ChainedPrediction, SvmError> {
    let first = predict(&model.first, x)?;
    let mut extended = Vec::with_capacity(x.len() + 1);
    extended.extend_from_slice(x);
    extended.push(first.label.one_hot());
    let second = predict(&model.second, &extended)?;
    Ok(match model.direction {
        ChainDirection::ValAro => ChainedPrediction {
            valence: second,
            arousal: first,
        },
        ChainDirection::AroVal => ChainedPrediction {
            valence: first,
            arousal: second,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Gamma;
    use BinaryLabel::{High, Low};

    fn toy(n_features: usize) -> (Array2<f64>, Vec<BinaryLabel>, Vec<BinaryLabel>) {
        let n = 24;
        let x = Array2::from_shape_fn((n, n_features), |(i, j)| {
            let v = if i % 2 == 0 { 1.0 } else { -1.0 };
            let a = if (i / 2) % 2 == 0 { 0.5 } else { -0.5 };
            v * (j % 3) as f64 + a + 0.01 * ((i * 7 + j * 3) % 11) as f64
        });
        let val = (0..n).map(|i| if i % 2 == 0 { High } else { Low }).collect();
        let aro = (0..n).map(|i| if (i / 2) % 2 == 0 { High } else { Low }).collect();
        (x, val, aro)
    }

    #[test]
    fn second_stage_dimensions() {
        let params = RbfParams { c: 10.0, gamma: Gamma::Scale };
        for (n_features, expected) in [(40, 41), (256, 257)] {
            let (x, val, aro) = toy(n_features);
            let m = train_chained(x.view(), &val, &aro, ChainDirection::ValAro, params, &SmoConfig::default())
                .unwrap();
            assert_eq!(m.first.n_features(), n_features);
            assert_eq!(m.second.n_features(), expected);
        }
    }

    #[test]
    fn valaro_first_stage_is_arousal_model() {
        let (x, val, aro) = toy(40);
        let params = RbfParams { c: 10.0, gamma: Gamma::Scale };
        let cfg = SmoConfig::default();
        let chained = train_chained(x.view(), &val, &aro, ChainDirection::ValAro, params, &cfg).unwrap();
        let standalone = train_smo(x.view(), &aro, params, &cfg).unwrap();
        assert_eq!(chained.first, standalone);
        for row in x.rows() {
            let row = row.as_slice().unwrap();
            let p = predict_chained(&chained, row).unwrap();
            assert_eq!(p.arousal, predict(&standalone, row).unwrap());
        }

        let aroval = train_chained(x.view(), &val, &aro, ChainDirection::AroVal, params, &cfg).unwrap();
        assert_eq!(aroval.first, train_smo(x.view(), &val, params, &cfg).unwrap());
    }

    #[test]
    fn misaligned_labels_rejected() {
        let (x, val, aro) = toy(40);
        let err = train_chained(
            x.view(),
            &val[..10],
            &aro,
            ChainDirection::AroVal,
            RbfParams::default(),
            &SmoConfig::default(),
        );
        assert!(matches!(err, Err(SvmError::LabelCount { .. })));
    }

    #[test]
    fn direction_parsing() {
        assert_eq!("valaro".parse::<ChainDirection>().unwrap(), ChainDirection::ValAro);
        assert_eq!("AROVAL".parse::<ChainDirection>().unwrap(), ChainDirection::AroVal);
        assert!("both".parse::<ChainDirection>().is_err());
    }
}
