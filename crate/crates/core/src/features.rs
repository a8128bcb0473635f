//! Per-window sub-band descriptors, pre-trial baseline removal, feature-vector
//! assembly and cross-channel correlation.
//!
//! A window yields, for each channel and each of the four rhythms, the
//! wavelet entropy and wavelet energy of that rhythm's detail coefficients.
//! Flattened vectors are channel-major, then band (theta, alpha, beta, gamma),
//! then entropy before energy, so the value for `(c, b, f)` sits at
//! `c·8 + b·2 + f`.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{
    tile, BinaryLabel, ChannelId, EegRecording, SignalError, Window, WindowSize, BASELINE_SECS,
};
use crate::wavelet::{
    db4_filter, dwt_decompose, wavelet_energy, wavelet_entropy, BoundaryMode, SubBand,
    WaveletError, WaveletFilter, PIPELINE_LEVELS,
};

pub const BANDS: usize = 4;
pub const FEATURES_PER_BAND: usize = 2;
/// Entries per channel in a flattened vector.
pub const PER_CHANNEL: usize = BANDS * FEATURES_PER_BAND;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature vectors need 5 or 32 channels, got {0}")]
    ChannelCount(usize),
    #[error("vector already carries a condition feature")]
    AlreadyConditioned,
    #[error("correlation needs at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("probe channel {0} is not in the feature set")]
    MissingProbe(ChannelId),
}

/// Entropy or energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Entropy,
    Energy,
}

impl Descriptor {
    pub const ALL: [Descriptor; 2] = [Descriptor::Entropy, Descriptor::Energy];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `[channel][band][descriptor]` table for one window or baseline segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BandFeatures {
    pub channels: Vec<ChannelId>,
    pub values: Vec<[[f64; FEATURES_PER_BAND]; BANDS]>,
}

impl BandFeatures {
    pub fn zeros(channels: Vec<ChannelId>) -> Self {
        let values = vec![[[0.0; FEATURES_PER_BAND]; BANDS]; channels.len()];
        Self { channels, values }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn get(&self, channel: usize, band: SubBand, d: Descriptor) -> f64 {
        self.values[channel][band.index()][d.index()]
    }

    fn check_same_shape(&self, other: &BandFeatures) -> Result<(), FeatureError> {
        if self.channels != other.channels {
            return Err(FeatureError::Shape(format!(
                "{} channels vs {} channels (or different order)",
                self.n_channels(),
                other.n_channels()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &BandFeatures, op: impl Fn(f64, f64) -> f64) -> BandFeatures {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let mut out = [[0.0; FEATURES_PER_BAND]; BANDS];
                for band in 0..BANDS {
                    for f in 0..FEATURES_PER_BAND {
                        out[band][f] = op(a[band][f], b[band][f]);
                    }
                }
                out
            })
            .collect();
        BandFeatures {
            channels: self.channels.clone(),
            values,
        }
    }
}

/// Computes band features from raw windows.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    filter: WaveletFilter,
    mode: BoundaryMode,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(BoundaryMode::default())
    }
}

impl FeatureExtractor {
    pub fn new(mode: BoundaryMode) -> Self {
        Self {
            filter: db4_filter(),
            mode,
        }
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Band features for a `[channels × samples]` block at 128 Hz.
    pub fn block(
        &self,
        channels: &[ChannelId],
        samples: ArrayView2<'_, f64>,
    ) -> Result<BandFeatures, FeatureError> {
        if samples.nrows() != channels.len() {
            return Err(FeatureError::Shape(format!(
                "{} rows for {} channels",
                samples.nrows(),
                channels.len()
            )));
        }
        let mut values = Vec::with_capacity(channels.len());
        let mut buf = Vec::with_capacity(samples.ncols());
        for row in samples.axis_iter(Axis(0)) {
            buf.clear();
            buf.extend(row.iter().copied());
            let dwt = dwt_decompose(&buf, PIPELINE_LEVELS, &self.filter, self.mode)?;
            let mut per_band = [[0.0; FEATURES_PER_BAND]; BANDS];
            for band in SubBand::ALL {
                let coeffs = dwt.detail(band.level());
                per_band[band.index()] = [wavelet_entropy(coeffs)?, wavelet_energy(coeffs)?];
            }
            values.push(per_band);
        }
        Ok(BandFeatures {
            channels: channels.to_vec(),
            values,
        })
    }

    pub fn window(&self, window: &Window) -> Result<BandFeatures, FeatureError> {
        self.block(&window.channels, window.samples.view())
    }

    /// Mean band features over the `3 / τ` tumbling segments of the rest period.
    pub fn baseline_reference(
        &self,
        channels: &[ChannelId],
        baseline: ArrayView2<'_, f64>,
        rate_hz: f64,
        size: WindowSize,
    ) -> Result<BaselineReference, FeatureError> {
        let expected = (BASELINE_SECS as f64 * rate_hz).round() as usize;
        if baseline.ncols() != expected {
            return Err(SignalError::BaselineLength {
                expected,
                actual: baseline.ncols(),
            }
            .into());
        }
        let segments = tile(baseline, size.samples(rate_hz))?;
        let mut sum = BandFeatures::zeros(channels.to_vec());
        for seg in &segments {
            let f = self.block(channels, seg.view())?;
            sum = sum.zip_with(&f, |a, b| a + b);
        }
        let k = segments.len() as f64;
        let mean = sum.zip_with(&sum, |a, _| a / k);
        Ok(BaselineReference {
            segments: segments.len(),
            features: mean,
        })
    }

    /// Feature vectors for every window of a trial, optionally baseline-corrected.
    pub fn trial_vectors(
        &self,
        rec: &EegRecording,
        size: WindowSize,
        remove: bool,
    ) -> Result<Vec<FeatureVector>, FeatureError> {
        let reference = if remove {
            Some(self.baseline_reference(
                &rec.channels,
                rec.baseline.view(),
                rec.sample_rate_hz,
                size,
            )?)
        } else {
            None
        };
        crate::signal::segment_windows(rec, size)?
            .iter()
            .map(|w| {
                let mut bf = self.window(w)?;
                if let Some(r) = &reference {
                    bf = remove_baseline(&bf, r)?;
                }
                assemble_vector(&bf)
            })
            .collect()
    }
}

/// Band features of one window using the pipeline defaults.
pub fn extract_band_features(window: &Window) -> Result<BandFeatures, FeatureError> {
    FeatureExtractor::default().window(window)
}

/// Mean rest-state features over `K` baseline segments.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReference {
    /// `K`: 3 for one-second windows, 1 for three-second windows.
    pub segments: usize,
    pub features: BandFeatures,
}

/// [`FeatureExtractor::baseline_reference`] with the pipeline defaults.
pub fn baseline_reference(
    channels: &[ChannelId],
    baseline: ArrayView2<'_, f64>,
    rate_hz: f64,
    size: WindowSize,
) -> Result<BaselineReference, FeatureError> {
    FeatureExtractor::default().baseline_reference(channels, baseline, rate_hz, size)
}

/// Subtracts the rest-state reference from both entropy and energy.
pub fn remove_baseline(
    evoked: &BandFeatures,
    reference: &BaselineReference,
) -> Result<BandFeatures, FeatureError> {
    evoked.check_same_shape(&reference.features)?;
    Ok(evoked.zip_with(&reference.features, |e, r| e - r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub channels: usize,
    pub bands: usize,
    pub features: usize,
    /// 1 when a condition label has been appended.
    pub condition: usize,
}

impl FeatureLayout {
    pub fn for_channels(channels: usize) -> Self {
        Self {
            channels,
            bands: BANDS,
            features: FEATURES_PER_BAND,
            condition: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.bands * self.features + self.condition
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(channel, band, descriptor)`.
    pub fn index(&self, channel: usize, band: SubBand, d: Descriptor) -> usize {
        channel * self.bands * self.features + band.index() * self.features + d.index()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Flattens band features into the fixed 40- or 256-entry layout.
pub fn assemble_vector(bf: &BandFeatures) -> Result<FeatureVector, FeatureError> {
    let n = bf.n_channels();
    if n != 5 && n != 32 {
        return Err(FeatureError::ChannelCount(n));
    }
    let values: Vec<f64> = bf
        .values
        .iter()
        .flat_map(|bands| bands.iter().flatten().copied())
        .collect();
    let layout = FeatureLayout::for_channels(n);
    debug_assert_eq!(values.len(), layout.len());
    Ok(FeatureVector { values, layout })
}

/// Appends the one-hot condition label (Low = 0, High = 1).
pub fn append_condition(
    fv: &FeatureVector,
    label: BinaryLabel,
) -> Result<FeatureVector, FeatureError> {
    if fv.layout.condition != 0 {
        return Err(FeatureError::AlreadyConditioned);
    }
    let mut values = Vec::with_capacity(fv.len() + 1);
    values.extend_from_slice(&fv.values);
    values.push(label.one_hot());
    Ok(FeatureVector {
        values,
        layout: FeatureLayout {
            condition: 1,
            ..fv.layout
        },
    })
}

/// Pearson correlation of the probe's entropy series in `band` against every
/// channel's, across observations. Zero-variance pairs map to `None`.
pub fn channel_correlation(
    dataset: &[BandFeatures],
    probe: ChannelId,
    band: SubBand,
) -> Result<BTreeMap<ChannelId, Option<f64>>, FeatureError> {
    if dataset.len() < 2 {
        return Err(FeatureError::TooFewObservations(dataset.len()));
    }
    let first = &dataset[0];
    for obs in &dataset[1..] {
        first.check_same_shape(obs)?;
    }
    let probe_idx = first
        .channels
        .iter()
        .position(|c| *c == probe)
        .ok_or(FeatureError::MissingProbe(probe))?;
    let series = |c: usize| -> Vec<f64> {
        dataset
            .iter()
            .map(|bf| bf.get(c, band, Descriptor::Entropy))
            .collect()
    };
    let p = series(probe_idx);
    Ok(first
        .channels
        .iter()
        .enumerate()
        .map(|(c, id)| (*id, pearson(&p, &series(c))))
        .collect())
}

/// Sample Pearson correlation, `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-feature z-scoring with statistics fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n_features: usize) -> Self {
        Self {
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
        }
    }

    /// Population statistics per column; constant columns keep unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = vec![0.0; x.ncols()];
        let mut var = vec![0.0; x.ncols()];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for row in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (v, (m, s)) in row.iter_mut().zip(self.mean.iter().zip(&self.std)) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}
