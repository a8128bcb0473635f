//! Recording bundles on disk, CSV import and a synthetic EEG generator.
//!
//! A bundle is a directory holding a TOML `manifest` and one
//! `trial_<id>.f32` payload per trial. Payloads are little-endian `f32`,
//! channel-major, each channel's baseline samples directly followed by its
//! evoked samples.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{
    BinaryLabel, ChannelId, EegRecording, Ratings, SignalError, BASELINE_SECS, EVOKED_SECS,
    PIPELINE_RATE_HZ,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("unsupported bundle format version {0} (this build reads {FORMAT_VERSION})")]
    Version(u32),
    #[error("{path}: payload is {actual} bytes, manifest implies {expected}")]
    PayloadSize {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("a bundle holds one subject; got subjects {0} and {1}")]
    MixedSubjects(u32, u32),
    #[error("duplicate trial id {0}")]
    DuplicateTrial(u32),
    #[error("trial {trial}: {source}")]
    Recording {
        trial: u32,
        #[source]
        source: SignalError,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: line {line}, column {column}: `{cell}` is not a number")]
    CsvCell {
        path: PathBuf,
        line: u64,
        column: usize,
        cell: String,
    },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("no bundles found under {0}")]
    NoBundles(PathBuf),
    #[error("nothing to write")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatastoreError + '_ {
    move |source| DatastoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub trial_id: u32,
    pub ratings: Ratings,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelId>,
    pub baseline_samples: usize,
    pub evoked_samples: usize,
    pub payload: String,
}

impl TrialEntry {
    pub fn payload_len(&self) -> u64 {
        (self.channels.len() * (self.baseline_samples + self.evoked_samples) * 4) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub subject_id: u32,
    pub trials: Vec<TrialEntry>,
}

/// Serialized payload of one recording.
///
/// Channel by channel: the baseline samples, then the evoked samples. Each
/// value is an `f32` in little-endian byte order.
pub fn payload_bytes(rec: &EegRecording) -> Vec<u8> {
    let mut out = Vec::with_capacity((rec.baseline.len() + rec.evoked.len()) * 4);
    for (b, e) in rec.baseline.rows().into_iter().zip(rec.evoked.rows()) {
        for v in b.iter().chain(e.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn decode_payload(bytes: &[u8], entry: &TrialEntry) -> (Array2<f64>, Array2<f64>) {
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let n = entry.channels.len();
    let (nb, ne) = (entry.baseline_samples, entry.evoked_samples);
    let stride = nb + ne;
    let baseline = Array2::from_shape_fn((n, nb), |(c, t)| values[c * stride + t]);
    let evoked = Array2::from_shape_fn((n, ne), |(c, t)| values[c * stride + nb + t]);
    (baseline, evoked)
}

/// Writes one subject's trials as a bundle directory, creating it if needed.
///
/// Samples are stored as `f32`; values that are not exactly representable are
/// rounded.
pub fn write_bundle(recordings: &[EegRecording], dir: &Path) -> Result<BundleManifest, DatastoreError> {
    let first = recordings.first().ok_or(DatastoreError::Empty)?;
    let mut seen = std::collections::BTreeSet::new();
    for r in recordings {
        if r.subject_id != first.subject_id {
            return Err(DatastoreError::MixedSubjects(first.subject_id, r.subject_id));
        }
        if !seen.insert(r.trial_id) {
            return Err(DatastoreError::DuplicateTrial(r.trial_id));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut trials = Vec::with_capacity(recordings.len());
    let mut lossy = 0usize;
    for r in recordings {
        lossy += r
            .baseline
            .iter()
            .chain(r.evoked.iter())
            .filter(|v| f64::from(**v as f32) != **v)
            .count();
        let payload = format!("trial_{}.f32", r.trial_id);
        let path = dir.join(&payload);
        fs::write(&path, payload_bytes(r)).map_err(io_err(&path))?;
        trials.push(TrialEntry {
            trial_id: r.trial_id,
            ratings: r.ratings,
            sample_rate_hz: r.sample_rate_hz,
            channels: r.channels.clone(),
            baseline_samples: r.baseline.ncols(),
            evoked_samples: r.evoked.ncols(),
            payload,
        });
    }
    if lossy > 0 {
        log::warn!("{lossy} samples rounded to single precision in {}", dir.display());
    }
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        subject_id: first.subject_id,
        trials,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| DatastoreError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest, DatastoreError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    // Check the version before the schema so newer layouts report cleanly.
    let raw: toml::Table = toml::from_str(&text).map_err(|e| DatastoreError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    match raw.get("format_version").and_then(toml::Value::as_integer) {
        Some(v) if v == i64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(DatastoreError::Version(v.try_into().unwrap_or(u32::MAX))),
        None => {
            return Err(DatastoreError::Manifest {
                path,
                message: "missing integer `format_version`".into(),
            })
        }
    }
    toml::from_str(&text).map_err(|e| DatastoreError::Manifest {
        path,
        message: e.to_string(),
    })
}

/// Loads every trial of a bundle, in manifest order.
pub fn read_bundle(dir: &Path) -> Result<Vec<EegRecording>, DatastoreError> {
    let manifest = read_manifest(dir)?;
    manifest
        .trials
        .iter()
        .map(|entry| {
            let path = dir.join(&entry.payload);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if bytes.len() as u64 != entry.payload_len() {
                return Err(DatastoreError::PayloadSize {
                    path,
                    expected: entry.payload_len(),
                    actual: bytes.len() as u64,
                });
            }
            let ratings = Ratings::new(entry.ratings.valence, entry.ratings.arousal).map_err(
                |source| DatastoreError::Recording {
                    trial: entry.trial_id,
                    source,
                },
            )?;
            let (baseline, evoked) = decode_payload(&bytes, entry);
            EegRecording::new(
                manifest.subject_id,
                entry.trial_id,
                entry.sample_rate_hz,
                entry.channels.clone(),
                baseline,
                evoked,
                ratings,
            )
            .map_err(|source| DatastoreError::Recording {
                trial: entry.trial_id,
                source,
            })
        })
        .collect()
}

/// Bundle directories under `root`: `root` itself if it holds a manifest,
/// otherwise its immediate subdirectories that do, sorted by name.
pub fn find_bundles(root: &Path) -> Result<Vec<PathBuf>, DatastoreError> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    if dirs.is_empty() {
        return Err(DatastoreError::NoBundles(root.to_path_buf()));
    }
    dirs.sort();
    Ok(dirs)
}

/// All recordings of a dataset directory (one bundle or a directory of bundles).
pub fn read_dataset(root: &Path) -> Result<Vec<EegRecording>, DatastoreError> {
    let mut out = Vec::new();
    for dir in find_bundles(root)? {
        out.extend(read_bundle(&dir)?);
    }
    Ok(out)
}

/// Writes one bundle per subject as `root/subject_<id>`.
pub fn write_dataset(recordings: &[EegRecording], root: &Path) -> Result<(), DatastoreError> {
    if recordings.is_empty() {
        return Err(DatastoreError::Empty);
    }
    let mut by_subject: BTreeMap<u32, Vec<EegRecording>> = BTreeMap::new();
    for r in recordings {
        by_subject.entry(r.subject_id).or_default().push(r.clone());
    }
    for (subject, recs) in by_subject {
        write_bundle(&recs, &root.join(format!("subject_{subject:02}")))?;
    }
    Ok(())
}

/// Metadata for one CSV trial file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTrial {
    pub subject_id: u32,
    pub trial_id: u32,
    pub ratings: Ratings,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelId>,
}

/// Parses one trial: a header row of channel names, then one row per sample.
/// The first 3 s become the baseline.
pub fn import_csv(path: &Path, meta: &CsvTrial) -> Result<EegRecording, DatastoreError> {
    let csv_err = |message: String| DatastoreError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(csv_err("empty file".into()));
    }
    if header.len() != meta.channels.len() {
        return Err(csv_err(format!(
            "{} columns but {} channels expected",
            header.len(),
            meta.channels.len()
        )));
    }
    for (col, (name, want)) in header.iter().zip(&meta.channels).enumerate() {
        let got: ChannelId = name
            .parse()
            .map_err(|_| csv_err(format!("column {}: unknown channel `{name}`", col + 1)))?;
        if got != *want {
            return Err(csv_err(format!("column {}: expected {want}, found {got}", col + 1)));
        }
    }

    let n = meta.channels.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                DatastoreError::CsvCell {
                    path: path.to_path_buf(),
                    line,
                    column: col + 1,
                    cell: cell.to_string(),
                }
            })?;
            columns[col].push(v);
        }
    }
    let rows = columns[0].len();
    if rows == 0 {
        return Err(csv_err("no samples".into()));
    }
    let baseline_len = (BASELINE_SECS as f64 * meta.sample_rate_hz).round() as usize;
    if rows <= baseline_len {
        return Err(csv_err(format!(
            "{rows} samples do not cover the {baseline_len}-sample baseline"
        )));
    }
    let baseline = Array2::from_shape_fn((n, baseline_len), |(c, t)| columns[c][t]);
    let evoked = Array2::from_shape_fn((n, rows - baseline_len), |(c, t)| columns[c][baseline_len + t]);
    EegRecording::new(
        meta.subject_id,
        meta.trial_id,
        meta.sample_rate_hz,
        meta.channels.clone(),
        baseline,
        evoked,
        meta.ratings,
    )
    .map_err(|source| DatastoreError::Recording {
        trial: meta.trial_id,
        source,
    })
}

/// Describes a directory of CSV trial files (`import.toml`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvImport {
    pub subject_id: u32,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelId>,
    pub trials: Vec<CsvImportTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvImportTrial {
    pub trial_id: u32,
    pub ratings: Ratings,
    pub file: String,
}

pub const CSV_IMPORT_FILE: &str = "import.toml";

pub fn import_csv_dir(dir: &Path) -> Result<Vec<EegRecording>, DatastoreError> {
    let path = dir.join(CSV_IMPORT_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let spec: CsvImport = toml::from_str(&text).map_err(|e| DatastoreError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    spec.trials
        .iter()
        .map(|t| {
            let meta = CsvTrial {
                subject_id: spec.subject_id,
                trial_id: t.trial_id,
                ratings: t.ratings,
                sample_rate_hz: spec.sample_rate_hz,
                channels: spec.channels.clone(),
            };
            import_csv(&dir.join(&t.file), &meta)
        })
        .collect()
}

/// Per-band amplitude added to a class's oscillations when its label is High.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEffect {
    /// Theta, alpha, beta, gamma.
    #[serde(default)]
    pub valence: [f64; 4],
    #[serde(default)]
    pub arousal: [f64; 4],
}

impl ClassEffect {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.valence.iter().chain(&self.arousal).all(|v| *v == 0.0)
    }
}

/// Centre frequencies of the four rhythms at 128 Hz.
pub const BAND_CENTRES_HZ: [f64; 4] = [6.0, 12.0, 24.0, 48.0];

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default)]
    pub seed: u64,
    pub n_subjects: u32,
    pub n_trials: u32,
    /// 5 or 32.
    pub channels: usize,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_evoked")]
    pub evoked_secs: usize,
    #[serde(default)]
    pub class_effect: ClassEffect,
    /// Class-independent band amplitudes, microvolts.
    #[serde(default = "default_base")]
    pub base_amplitude: [f64; 4],
    pub noise_std: f64,
    /// Channels that carry the class effect; all channels when absent.
    #[serde(default)]
    pub effect_channels: Option<Vec<ChannelId>>,
    /// Fraction of trials whose arousal label equals the valence label.
    #[serde(default = "default_agreement")]
    pub label_agreement: f64,
}

fn default_rate() -> f64 {
    PIPELINE_RATE_HZ
}

fn default_evoked() -> usize {
    EVOKED_SECS
}

fn default_base() -> [f64; 4] {
    [4.0, 3.0, 2.0, 1.0]
}

fn default_agreement() -> f64 {
    0.5
}

impl SynthSpec {
    pub fn new(seed: u64, n_subjects: u32, n_trials: u32, channels: usize) -> Self {
        Self {
            seed,
            n_subjects,
            n_trials,
            channels,
            rate_hz: PIPELINE_RATE_HZ,
            evoked_secs: EVOKED_SECS,
            class_effect: ClassEffect::none(),
            base_amplitude: default_base(),
            noise_std: 1.0,
            effect_channels: None,
            label_agreement: default_agreement(),
        }
    }

    pub fn validate(&self) -> Result<(), DatastoreError> {
        let fail = |m: &str| Err(DatastoreError::Spec(m.to_string()));
        if self.rate_hz != PIPELINE_RATE_HZ {
            return fail("rate_hz must be 128");
        }
        if self.n_subjects == 0 {
            return fail("n_subjects must be positive");
        }
        if self.n_trials < 2 {
            return fail("n_trials must be at least 2");
        }
        if ChannelId::montage(self.channels).is_none() {
            return fail("channels must be 5 or 32");
        }
        if self.evoked_secs == 0 || !self.evoked_secs.is_multiple_of(3) {
            return fail("evoked_secs must be a positive multiple of 3");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail("noise_std must be finite and non-negative");
        }
        let amplitudes = self
            .base_amplitude
            .iter()
            .chain(&self.class_effect.valence)
            .chain(&self.class_effect.arousal);
        if amplitudes.clone().any(|a| !a.is_finite()) {
            return fail("amplitudes must be finite");
        }
        if !(0.0..=1.0).contains(&self.label_agreement) {
            return fail("label_agreement must be in [0, 1]");
        }
        if let Some(subset) = &self.effect_channels {
            let montage = self.montage();
            if let Some(c) = subset.iter().find(|c| !montage.contains(c)) {
                return Err(DatastoreError::Spec(format!("effect channel {c} is not in the montage")));
            }
        }
        Ok(())
    }

    pub fn montage(&self) -> &'static [ChannelId] {
        ChannelId::montage(self.channels).unwrap_or(&ChannelId::ALL)
    }
}

/// Balanced valence labels and arousal labels that agree with them on about
/// `agreement · n` trials while staying balanced themselves.
fn draw_labels(n: usize, agreement: f64, rng: &mut ChaCha8Rng) -> Vec<(BinaryLabel, BinaryLabel)> {
    let mut valence: Vec<BinaryLabel> = (0..n)
        .map(|i| if i < n / 2 { BinaryLabel::High } else { BinaryLabel::Low })
        .collect();
    valence.shuffle(rng);
    let mut arousal = valence.clone();
    let mut highs: Vec<usize> = (0..n).filter(|&i| valence[i] == BinaryLabel::High).collect();
    let mut lows: Vec<usize> = (0..n).filter(|&i| valence[i] == BinaryLabel::Low).collect();
    highs.shuffle(rng);
    lows.shuffle(rng);
    let flips = ((1.0 - agreement) * (n / 2) as f64).round() as usize;
    for &i in highs.iter().take(flips).chain(lows.iter().take(flips)) {
        arousal[i] = arousal[i].flip();
    }
    valence.into_iter().zip(arousal).collect()
}

fn rating(label: BinaryLabel) -> f64 {
    match label {
        BinaryLabel::Low => 3.0,
        BinaryLabel::High => 7.0,
    }
}

/// Second-order resonator coefficients for a band centred at `centre` Hz with
/// a bandwidth of a third of the centre, plus the gain that brings the
/// stationary output to the power of a unit-amplitude sinusoid.
fn resonator(centre: f64, rate: f64) -> (f64, f64, f64) {
    let r = 1.0 - PI * centre / 3.0 / rate;
    let a1 = 2.0 * r * (2.0 * PI * centre / rate).cos();
    let a2 = -r * r;
    let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
    (a1, a2, (0.5 / var).sqrt())
}

const RESONATOR_BURN_IN: usize = 256;

fn synth_block(
    amplitudes: &[[f64; 4]],
    len: usize,
    rate: f64,
    noise: Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let filters: [(f64, f64, f64); 4] = std::array::from_fn(|b| resonator(BAND_CENTRES_HZ[b], rate));
    let mut m = Array2::zeros((amplitudes.len(), len));
    for (mut row, amp) in m.rows_mut().into_iter().zip(amplitudes) {
        let mut state = [[0.0f64; 2]; 4];
        for t in 0..RESONATOR_BURN_IN + len {
            let mut s = 0.0;
            for (b, &(a1, a2, gain)) in filters.iter().enumerate() {
                let y = a1 * state[b][0] + a2 * state[b][1] + rng.sample(unit);
                state[b] = [y, state[b][0]];
                s += amp[b] * gain * y;
            }
            if t >= RESONATOR_BURN_IN {
                row[t - RESONATOR_BURN_IN] = f64::from((s + rng.sample(noise)) as f32);
            }
        }
    }
    m
}

/// Labelled synthetic trials, subject by subject, each with a 3 s baseline.
///
/// Each channel sums one narrowband random oscillation per band centre
/// (a resonator driven by white noise, scaled to the power of a sinusoid of
/// the given amplitude) plus white noise. Evoked amplitudes grow by the class
/// effect when a label is High.
/// Baselines use the base amplitudes only. Samples are rounded to `f32` so
/// bundles round-trip exactly.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<EegRecording>, DatastoreError> {
    spec.validate()?;
    let montage = spec.montage();
    let carries: Vec<bool> = montage
        .iter()
        .map(|c| spec.effect_channels.as_ref().is_none_or(|s| s.contains(c)))
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| DatastoreError::Spec(e.to_string()))?;
    let baseline_len = (BASELINE_SECS as f64 * spec.rate_hz) as usize;
    let evoked_len = spec.evoked_secs * spec.rate_hz as usize;

    let mut jobs = Vec::new();
    for subject in 1..=spec.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::from(subject));
        let labels = draw_labels(spec.n_trials as usize, spec.label_agreement, &mut rng);
        for (t, (v, a)) in labels.into_iter().enumerate() {
            jobs.push((subject, t as u32 + 1, v, a));
        }
    }
    jobs.par_iter()
        .map(|&(subject, trial, v, a)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((u64::from(subject) << 32) | u64::from(trial));
            let base = vec![spec.base_amplitude; montage.len()];
            let evoked_amp: Vec<[f64; 4]> = carries
                .iter()
                .map(|&on| {
                    std::array::from_fn(|b| {
                        let mut amp = spec.base_amplitude[b];
                        if on && v == BinaryLabel::High {
                            amp += spec.class_effect.valence[b];
                        }
                        if on && a == BinaryLabel::High {
                            amp += spec.class_effect.arousal[b];
                        }
                        amp
                    })
                })
                .collect();
            let baseline = synth_block(&base, baseline_len, spec.rate_hz, noise, &mut rng);
            let evoked = synth_block(&evoked_amp, evoked_len, spec.rate_hz, noise, &mut rng);
            let ratings = Ratings::new(rating(v), rating(a)).expect("fixed ratings are in range");
            EegRecording::new(subject, trial, spec.rate_hz, montage.to_vec(), baseline, evoked, ratings)
                .map_err(|source| DatastoreError::Recording { trial, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            evoked_secs: 3,
            ..SynthSpec::new(3, 2, 6, 5)
        }
    }

    #[test]
    fn golden_float_bytes() {
        let rec = EegRecording::new(
            1,
            1,
            1.0,
            vec![ChannelId::Af3],
            array![[1.0, -2.0, 0.5]],
            array![[0.0]],
            Ratings::new(5.0, 5.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            payload_bytes(&rec),
            vec![0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0, 0x00, 0x00, 0x00, 0x3F, 0, 0, 0, 0]
        );
    }

    #[test]
    fn labels_balanced_with_requested_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, agreement) in [(40, 0.5), (41, 0.8), (7, 1.0), (10, 0.0)] {
            let l = draw_labels(n, agreement, &mut rng);
            let vh = l.iter().filter(|p| p.0 == BinaryLabel::High).count() as i64;
            let ah = l.iter().filter(|p| p.1 == BinaryLabel::High).count() as i64;
            assert!((2 * vh - n as i64).abs() <= 1);
            assert!((2 * ah - n as i64).abs() <= 1);
            if agreement == 1.0 {
                assert!(l.iter().all(|p| p.0 == p.1));
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(a[0].evoked.dim(), (5, 384));
        assert_eq!(a[0].baseline.dim(), (5, 384));
        let mut other = small_spec();
        other.seed = 4;
        assert_ne!(generate_synthetic(&other).unwrap(), a);
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        s.rate_hz = 256.0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = small_spec();
        s.channels = 7;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.effect_channels = Some(vec![ChannelId::O2]);
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.noise_std = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_toml_defaults() {
        let s: SynthSpec = toml::from_str(
            "seed = 1\nn_subjects = 2\nn_trials = 4\nchannels = 32\nnoise_std = 0.5\n\
             [class_effect]\nvalence = [0.0, 2.0, 0.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(s.rate_hz, 128.0);
        assert_eq!(s.evoked_secs, 60);
        assert_eq!(s.class_effect.arousal, [0.0; 4]);
        assert!(s.validate().is_ok());
    }
}
