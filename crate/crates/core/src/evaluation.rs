//! Stratified cross-validation and the subject-dependent / subject-independent
//! experiment protocols.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    predict, predict_chained, train_chained, train_smo, ChainDirection, ChainedModel, RbfParams,
    SmoConfig, SvmError, TrainedSvm,
};
use crate::features::{FeatureError, FeatureExtractor};
use crate::signal::{select_channels, BinaryLabel, ChannelId, EegRecording, WindowSize};
use crate::wavelet::BoundaryMode;
use crate::Target;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class:?} has {count} samples, fewer than k = {k}")]
    TooFewInClass {
        class: BinaryLabel,
        count: usize,
        k: usize,
    },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("length mismatch: {0} predictions vs {1} labels")]
    Length(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: SvmError,
    },
    #[error("subject {subject}: {source}")]
    Subject {
        subject: u32,
        #[source]
        source: Box<EvalError>,
    },
    #[error("recording {subject}/{trial}: {source}")]
    Features {
        subject: u32,
        trial: u32,
        #[source]
        source: FeatureError,
    },
    #[error("channel count must be 5 or 32, got {0}")]
    ChannelCount(usize),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error("subsample fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("report: {0}")]
    Report(String),
}

/// Fold assignment for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train, test)` indices for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments.len()).partition(|&i| self.assignments[i] == f);
        (train, test)
    }
}

/// Seeded per-class shuffle followed by round-robin fold assignment.
///
/// The round-robin counter carries over between classes so fold sizes stay
/// balanced as well as per-class counts.
pub fn stratified_kfold(labels: &[BinaryLabel], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for class in [BinaryLabel::Low, BinaryLabel::High] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(EvalError::TooFewInClass {
                class,
                count: idx.len(),
                k,
            });
        }
        idx.shuffle(&mut rng);
        for i in idx {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Indices of a class-proportional random subsample of `fraction · n` rows.
pub fn stratified_subsample(
    labels: &[BinaryLabel],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Fraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in [BinaryLabel::Low, BinaryLabel::High] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let take = (idx.len() as f64 * fraction).round() as usize;
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..take]);
    }
    keep.sort_unstable();
    Ok(keep)
}

pub fn accuracy(pred: &[BinaryLabel], truth: &[BinaryLabel]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::Length(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "SVM", alias = "svm")]
    Svm,
    #[serde(rename = "VALARO", alias = "valaro")]
    ValAro,
    #[serde(rename = "AROVAL", alias = "aroval")]
    AroVal,
}

impl ModelKind {
    fn chain(self) -> Option<ChainDirection> {
        match self {
            ModelKind::Svm => None,
            ModelKind::ValAro => Some(ChainDirection::ValAro),
            ModelKind::AroVal => Some(ChainDirection::AroVal),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Svm => "SVM",
            ModelKind::ValAro => "VALARO",
            ModelKind::AroVal => "AROVAL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(alias = "dep", alias = "dependent")]
    SubjectDependent,
    #[serde(alias = "indep", alias = "independent")]
    SubjectIndependent,
}

/// Window-level feature rows with both labels and their source trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples {
    pub x: Array2<f64>,
    pub valence: Vec<BinaryLabel>,
    pub arousal: Vec<BinaryLabel>,
    /// Index of the originating trial, for trial-grouped folds.
    pub group: Vec<usize>,
}

impl LabeledSamples {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn labels(&self, target: Target) -> &[BinaryLabel] {
        match target {
            Target::Valence => &self.valence,
            Target::Arousal => &self.arousal,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSamples {
        LabeledSamples {
            x: self.x.select(Axis(0), idx),
            valence: idx.iter().map(|&i| self.valence[i]).collect(),
            arousal: idx.iter().map(|&i| self.arousal[i]).collect(),
            group: idx.iter().map(|&i| self.group[i]).collect(),
        }
    }
}

/// Feature rows for every window of every recording; windows inherit the
/// trial's labels.
pub fn build_samples(
    recs: &[EegRecording],
    tau: WindowSize,
    baseline_removed: bool,
    extractor: &FeatureExtractor,
) -> Result<LabeledSamples, EvalError> {
    let per_trial = recs
        .par_iter()
        .map(|rec| {
            extractor
                .trial_vectors(rec, tau, baseline_removed)
                .map_err(|source| EvalError::Features {
                    subject: rec.subject_id,
                    trial: rec.trial_id,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n: usize = per_trial.iter().map(Vec::len).sum();
    let dim = per_trial
        .iter()
        .flatten()
        .map(|v| v.len())
        .next()
        .ok_or(EvalError::Empty)?;
    let mut x = Array2::zeros((n, dim));
    let (mut valence, mut arousal, mut group) = (Vec::new(), Vec::new(), Vec::new());
    let mut row = 0;
    for (t, (rec, vectors)) in recs.iter().zip(&per_trial).enumerate() {
        for v in vectors {
            x.row_mut(row).assign(&ndarray::ArrayView1::from(&v.values));
            valence.push(rec.ratings.valence_label());
            arousal.push(rec.ratings.arousal_label());
            group.push(t);
            row += 1;
        }
    }
    Ok(LabeledSamples {
        x,
        valence,
        arousal,
        group,
    })
}

/// A model fitted on one training split.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Single(TrainedSvm),
    Chained(ChainedModel),
}

impl FittedModel {
    pub fn predict(&self, x: &[f64], target: Target) -> Result<BinaryLabel, SvmError> {
        match self {
            FittedModel::Single(m) => Ok(predict(m, x)?.label),
            FittedModel::Chained(m) => {
                let p = predict_chained(m, x)?;
                Ok(match target {
                    Target::Valence => p.valence.label,
                    Target::Arousal => p.arousal.label,
                })
            }
        }
    }
}

/// Model family plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: RbfParams,
    pub smo: SmoConfig,
}

/// Fits on `train` only; nothing from other rows reaches the model.
pub fn fit_split(
    samples: &LabeledSamples,
    train: &[usize],
    target: Target,
    spec: &ModelSpec,
) -> Result<FittedModel, SvmError> {
    let x = samples.x.select(Axis(0), train);
    let pick = |labels: &[BinaryLabel]| -> Vec<BinaryLabel> { train.iter().map(|&i| labels[i]).collect() };
    match spec.kind.chain() {
        None => train_smo(x.view(), &pick(samples.labels(target)), spec.params, &spec.smo)
            .map(FittedModel::Single),
        Some(dir) => train_chained(
            x.view(),
            &pick(&samples.valence),
            &pick(&samples.arousal),
            dir,
            spec.params,
            &spec.smo,
        )
        .map(FittedModel::Chained),
    }
}

fn evaluate_split(
    model: &FittedModel,
    x: ArrayView2<'_, f64>,
    truth: &[BinaryLabel],
    test: &[usize],
    target: Target,
) -> Result<f64, SvmError> {
    let pred = test
        .iter()
        .map(|&i| model.predict(&x.row(i).to_vec(), target))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<_> = test.iter().map(|&i| truth[i]).collect();
    accuracy(&pred, &truth).map_err(|e| SvmError::Eval(Box::new(e)))
}

/// Per-fold accuracies with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub per_fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
}

/// Fold plan over samples, or over trials when `grouped` is set.
pub fn plan_folds(
    samples: &LabeledSamples,
    target: Target,
    k: usize,
    seed: u64,
    grouped: bool,
) -> Result<FoldPlan, EvalError> {
    let labels = samples.labels(target);
    if !grouped {
        return stratified_kfold(labels, k, seed);
    }
    let mut trial_label: BTreeMap<usize, BinaryLabel> = BTreeMap::new();
    for (g, l) in samples.group.iter().zip(labels) {
        trial_label.entry(*g).or_insert(*l);
    }
    let trials: Vec<usize> = trial_label.keys().copied().collect();
    let tl: Vec<BinaryLabel> = trial_label.values().copied().collect();
    let plan = stratified_kfold(&tl, k, seed)?;
    let fold_of: BTreeMap<usize, usize> = trials.into_iter().zip(plan.assignments).collect();
    Ok(FoldPlan {
        k,
        assignments: samples.group.iter().map(|g| fold_of[g]).collect(),
        seed,
    })
}

/// Stratified k-fold evaluation; folds run in parallel and are reported in order.
pub fn cross_validate(
    samples: &LabeledSamples,
    target: Target,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
    grouped: bool,
) -> Result<CvOutcome, EvalError> {
    let plan = plan_folds(samples, target, k, seed, grouped)?;
    let truth = samples.labels(target);
    let per_fold_accuracy = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = plan.split(fold);
            fit_split(samples, &train, target, spec)
                .and_then(|m| evaluate_split(&m, samples.x.view(), truth, &test, target))
                .map_err(|source| EvalError::Fold { fold, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, stddev) = mean_std(&per_fold_accuracy);
    Ok(CvOutcome {
        per_fold_accuracy,
        mean,
        stddev,
    })
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: Target,
    pub mode: Mode,
    pub channels: usize,
    pub tau_s: WindowSize,
    pub baseline_removed: bool,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub params: RbfParams,
    /// Defaults to 8 folds per subject, 6 pooled.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Keep all windows of a trial in the same fold.
    #[serde(default)]
    pub grouped: bool,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

fn default_model() -> ModelKind {
    ModelKind::Svm
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(target: Target, mode: Mode, channels: usize, tau_s: WindowSize) -> Self {
        Self {
            target,
            mode,
            channels,
            tau_s,
            baseline_removed: true,
            model: ModelKind::Svm,
            params: RbfParams::SUBJECT_DEPENDENT,
            k: None,
            standardize: true,
            grouped: false,
            boundary: BoundaryMode::default(),
        }
    }

    pub fn folds(&self) -> usize {
        self.k.unwrap_or(match self.mode {
            Mode::SubjectDependent => 8,
            Mode::SubjectIndependent => 6,
        })
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            params: self.params,
            smo: SmoConfig {
                standardize: self.standardize,
                ..SmoConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub target: Target,
    pub mode: Mode,
    pub channels: usize,
    pub tau_s: WindowSize,
    pub baseline_removed: bool,
    pub model: ModelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: String,
    pub k: usize,
    pub grouped: bool,
    pub seed: u64,
    pub n_samples: usize,
    /// Pooled mode: one entry per fold. Per-subject mode: one mean per subject,
    /// ascending subject id.
    pub per_fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    /// Per-subject fold accuracies, present in per-subject mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_subject: Option<BTreeMap<u32, Vec<f64>>>,
}

impl ExperimentReport {
    /// True when `mean`/`stddev` match `per_fold_accuracy` to 1e-12.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.per_fold_accuracy);
        (m - self.mean).abs() <= 1e-12
            && (s - self.stddev).abs() <= 1e-12
            && self.per_fold_accuracy.iter().all(|a| (0.0..=1.0).contains(a))
    }
}

/// Restricts every recording to the 5- or 32-channel montage.
pub fn restrict_montage(
    dataset: &[EegRecording],
    channels: usize,
) -> Result<Vec<EegRecording>, EvalError> {
    let montage = ChannelId::montage(channels).ok_or(EvalError::ChannelCount(channels))?;
    dataset
        .iter()
        .map(|r| {
            if r.channels == montage {
                Ok(r.clone())
            } else {
                select_channels(r, montage).map_err(EvalError::from)
            }
        })
        .collect()
}

/// Runs one configuration end to end: montage, windowing, features,
/// optional baseline removal, then cross-validation.
pub fn run_experiment(
    dataset: &[EegRecording],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    let recs = restrict_montage(dataset, config.channels)?;
    let extractor = FeatureExtractor::new(config.boundary);
    let k = config.folds();
    let spec = config.spec();

    let (per_fold_accuracy, per_subject, n_samples) = match config.mode {
        Mode::SubjectIndependent => {
            let samples = build_samples(&recs, config.tau_s, config.baseline_removed, &extractor)?;
            let cv = cross_validate(&samples, config.target, &spec, k, seed, config.grouped)?;
            (cv.per_fold_accuracy, None, samples.len())
        }
        Mode::SubjectDependent => {
            let mut by_subject: BTreeMap<u32, Vec<EegRecording>> = BTreeMap::new();
            for r in recs {
                by_subject.entry(r.subject_id).or_default().push(r);
            }
            let mut means = Vec::with_capacity(by_subject.len());
            let mut folds = BTreeMap::new();
            let mut total = 0;
            for (subject, trials) in by_subject {
                let wrap = |e: EvalError| EvalError::Subject {
                    subject,
                    source: Box::new(e),
                };
                let samples =
                    build_samples(&trials, config.tau_s, config.baseline_removed, &extractor)
                        .map_err(wrap)?;
                total += samples.len();
                let subject_seed = seed.wrapping_add(u64::from(subject));
                let cv = cross_validate(&samples, config.target, &spec, k, subject_seed, config.grouped)
                    .map_err(wrap)?;
                means.push(cv.mean);
                folds.insert(subject, cv.per_fold_accuracy);
            }
            (means, Some(folds), total)
        }
    };
    let (mean, stddev) = mean_std(&per_fold_accuracy);
    Ok(ExperimentReport {
        target: config.target,
        mode: config.mode,
        channels: config.channels,
        tau_s: config.tau_s,
        baseline_removed: config.baseline_removed,
        model: config.model,
        c: config.params.c,
        gamma: config.params.gamma.to_string(),
        k,
        grouped: config.grouped,
        seed,
        n_samples,
        per_fold_accuracy,
        mean,
        stddev,
        per_subject,
    })
}

/// One JSON object per line, fields in declaration order.
pub fn write_reports(w: &mut impl Write, reports: &[ExperimentReport]) -> Result<(), EvalError> {
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| EvalError::Report(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| EvalError::Report(e.to_string()))?;
    }
    Ok(())
}

pub fn read_reports(r: impl BufRead) -> Result<Vec<ExperimentReport>, EvalError> {
    r.lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| {
            let l = l.map_err(|e| EvalError::Report(e.to_string()))?;
            serde_json::from_str(&l).map_err(|e| EvalError::Report(e.to_string()))
        })
        .collect()
}
