//! RBF-kernel soft-margin SVM, chained two-stage models, hyperparameter
//! search and Russell-quadrant mapping.

mod chained;
mod grid;
mod io;
mod smo;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Standardizer;
use crate::signal::BinaryLabel;

pub use chained::{predict_chained, train_chained, ChainDirection, ChainedModel, ChainedPrediction};
pub use grid::{grid_search, select_best, GridCell, GridSearchResult, ParamGrid};
pub use io::{read_chained, read_model, write_chained, write_model, CHAINED_MAGIC, MODEL_MAGIC};
pub use smo::{train_smo, train_smo_with_report, SmoConfig, SolverReport};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("vector length mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("training data contains a single class ({0:?})")]
    SingleClass(BinaryLabel),
    #[error("{samples} samples but {labels} labels")]
    LabelCount { samples: usize, labels: usize },
    #[error("training data is empty")]
    Empty,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("pooled feature variance is zero; gamma cannot be scaled")]
    ZeroVariance,
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error(
        "SMO did not converge after {iterations} iterations \
         (KKT gap {gap:.3e} > tolerance {tol:.1e}, {free} free vectors)"
    )]
    NotConverged {
        iterations: usize,
        gap: f64,
        tol: f64,
        free: usize,
    },
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Eval(#[from] Box<crate::evaluation::EvalError>),
}

/// Kernel width, either fixed or derived from the training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Value(f64),
    /// `1 / (n_features × pooled variance)` of the training matrix.
    Scale,
}

impl Gamma {
    /// Ordering key for tie-breaking; `Scale` sorts after every fixed value.
    pub(crate) fn sort_key(self) -> f64 {
        match self {
            Gamma::Value(g) => g,
            Gamma::Scale => f64::INFINITY,
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Value(g) => write!(f, "{g}"),
            Gamma::Scale => f.write_str("scale"),
        }
    }
}

impl FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("scale") {
            return Ok(Gamma::Scale);
        }
        let g: f64 = s.parse().map_err(|_| format!("invalid gamma `{s}`"))?;
        if g > 0.0 && g.is_finite() {
            Ok(Gamma::Value(g))
        } else {
            Err(format!("gamma must be positive, got {s}"))
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Value(g) => s.serialize_f64(*g),
            Gamma::Scale => s.serialize_str("scale"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(g) if g > 0.0 && g.is_finite() => Ok(Gamma::Value(g)),
            Repr::Num(g) => Err(serde::de::Error::custom(format!(
                "gamma must be positive, got {g}"
            ))),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: Gamma,
}

impl RbfParams {
    /// Per-subject default: C = 200 with data-scaled gamma.
    pub const SUBJECT_DEPENDENT: RbfParams = RbfParams {
        c: 200.0,
        gamma: Gamma::Scale,
    };

    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SvmError::InvalidParam(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

impl Default for RbfParams {
    fn default() -> Self {
        Self::SUBJECT_DEPENDENT
    }
}

/// `exp(-gamma · ‖x - y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `1 / (n_features × variance)`, the variance taken over every entry of `x`.
pub fn gamma_scale(x: ArrayView2<'_, f64>) -> Result<f64, SvmError> {
    if x.nrows() < 2 {
        return Err(SvmError::Empty);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var.is_nan() || var <= 0.0 {
        return Err(SvmError::ZeroVariance);
    }
    Ok(1.0 / (x.ncols() as f64 * var))
}

/// Label and raw decision value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub label: BinaryLabel,
    pub decision: f64,
}

/// A fitted binary classifier; `High` is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSvm {
    /// Support vectors in standardized coordinates, one per row.
    pub support_vectors: Array2<f64>,
    /// `α_i · y_i` for each support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// How gamma was specified at training time.
    pub gamma_spec: Gamma,
    /// Resolved kernel width.
    pub gamma: f64,
    pub standardizer: Standardizer,
}

impl TrainedSvm {
    pub fn n_features(&self) -> usize {
        self.standardizer.n_features()
    }

    pub fn n_support(&self) -> usize {
        self.dual_coeffs.len()
    }

    pub fn params(&self) -> RbfParams {
        RbfParams {
            c: self.c,
            gamma: Gamma::Value(self.gamma),
        }
    }

    /// Decision value for an already-standardized vector.
    pub(crate) fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, coef)| {
                let sv = sv.as_slice().expect("support vectors are contiguous");
                coef * (-self.gamma * squared_distance(sv, z)).exp()
            })
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.n_features() {
            return Err(SvmError::Dimension {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(self.decision_standardized(&self.standardizer.transform_row(x)))
    }
}

/// Positive decision values are High; zero and below are Low.
pub fn label_of_decision(decision: f64) -> BinaryLabel {
    if decision > 0.0 {
        BinaryLabel::High
    } else {
        BinaryLabel::Low
    }
}

pub fn predict(model: &TrainedSvm, x: &[f64]) -> Result<Prediction, SvmError> {
    let decision = model.decision_value(x)?;
    Ok(Prediction {
        label: label_of_decision(decision),
        decision,
    })
}

/// Emotion quadrant of the valence/arousal plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    Happy,
    Angry,
    Sad,
    Relaxed,
}

impl Quadrant {
    pub fn name(self) -> &'static str {
        match self {
            Quadrant::Happy => "Happy",
            Quadrant::Angry => "Angry",
            Quadrant::Sad => "Sad",
            Quadrant::Relaxed => "Relaxed",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn quadrant_of(valence: BinaryLabel, arousal: BinaryLabel) -> Quadrant {
    use BinaryLabel::{High, Low};
    match (valence, arousal) {
        (High, High) => Quadrant::Happy,
        (Low, High) => Quadrant::Angry,
        (Low, Low) => Quadrant::Sad,
        (High, Low) => Quadrant::Relaxed,
    }
}
