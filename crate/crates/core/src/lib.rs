//! Wavelet-feature EEG emotion recognition.
//!
//! Raw multichannel EEG is cut into tumbling windows, each channel is
//! decomposed with a 4-level db4 DWT, and the theta/alpha/beta/gamma detail
//! bands are summarized by wavelet entropy and energy. After subtracting a
//! rest-state reference, the vectors feed RBF-kernel SVMs (optionally chained
//! across the valence and arousal dimensions) evaluated by stratified k-fold
//! cross-validation. A streaming front end classifies live windows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod classifier;
pub mod datastore;
pub mod evaluation;
pub mod features;
pub mod signal;
pub mod stream;
pub mod wavelet;

pub use classifier::{
    predict, predict_chained, train_chained, train_smo, ChainDirection, ChainedModel, Gamma,
    ParamGrid, Prediction, Quadrant, RbfParams, SmoConfig, SvmError, TrainedSvm,
};
pub use datastore::{generate_synthetic, read_bundle, write_bundle, DatastoreError, SynthSpec};
pub use evaluation::{
    cross_validate, run_experiment, stratified_kfold, EvalError, ExperimentConfig,
    ExperimentReport, FoldPlan, ModelKind, Mode,
};
pub use features::{BandFeatures, BaselineReference, FeatureError, FeatureExtractor, FeatureVector};
pub use signal::{BinaryLabel, ChannelId, EegRecording, Ratings, SignalError, Window, WindowSize};
pub use stream::{StreamConfig, StreamError, WindowAccumulator};
pub use wavelet::{BoundaryMode, SubBand, WaveletError};

/// Affective dimension being classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    #[serde(alias = "val", alias = "valence")]
    Valence,
    #[serde(alias = "aro", alias = "arousal")]
    Arousal,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Valence, Target::Arousal];

    pub fn short(self) -> &'static str {
        match self {
            Target::Valence => "val",
            Target::Arousal => "aro",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Valence => "Valence",
            Target::Arousal => "Arousal",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "val" | "valence" => Ok(Target::Valence),
            "aro" | "arousal" => Ok(Target::Arousal),
            _ => Err(format!("unknown target `{s}` (expected val or aro)")),
        }
    }
}
