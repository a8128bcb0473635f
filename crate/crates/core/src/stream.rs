//! Real-time classification of a live sample stream.
//!
//! Input is newline-delimited JSON, one tick per line: `{"s": [µV, ...]}`
//! with one value per configured channel at 128 Hz. The first output line is
//! a handshake; every completed tumbling window then yields
//!
//! ```text
//! {"window":0,"valence":"H","arousal":"L","quadrant":"Angry","dv_val":0.4,"dv_aro":-1.2,"latency_ms":0.3}
//! ```
//!
//! Error and stats records go to a separate stream so prediction output
//! stays clean.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::classifier::{
    predict, predict_chained, quadrant_of, read_chained, read_model, ChainedModel, Quadrant,
    SvmError, TrainedSvm, CHAINED_MAGIC, MODEL_MAGIC,
};
use crate::features::{remove_baseline, assemble_vector, BaselineReference, FeatureError, FeatureExtractor};
use crate::signal::{ChannelId, Window, WindowSize, BASELINE_SECS, PIPELINE_RATE_HZ};
use crate::wavelet::BoundaryMode;

pub const PROTOCOL: &str = "emowave-stream";
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: SvmError,
    },
    #[error("model expects {expected} features but {channels} channels give {actual}")]
    ModelDimension {
        expected: usize,
        actual: usize,
        channels: usize,
    },
    #[error("tick {position}: expected {expected} values, got {actual}")]
    Arity {
        position: u64,
        expected: usize,
        actual: usize,
    },
    #[error("baseline file {path}: {message}")]
    Baseline { path: PathBuf, message: String },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("stream i/o: {0}")]
    Transport(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// The first 3 s of every session.
    FromStream,
    /// A CSV with a channel-name header and 3 s of rows.
    FromFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub channels: Vec<ChannelId>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    pub tau_s: WindowSize,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineMode,
    /// Separate per-dimension models (`EWSVM1`) ...
    #[serde(default)]
    pub valence_model: Option<PathBuf>,
    #[serde(default)]
    pub arousal_model: Option<PathBuf>,
    /// ... or one chained model (`EWCHN1`).
    #[serde(default)]
    pub chained_model: Option<PathBuf>,
    #[serde(default)]
    pub boundary: BoundaryMode,
    /// TCP address; standard input when absent.
    #[serde(default)]
    pub listen: Option<String>,
    /// Emit a stats record every this many windows.
    #[serde(default = "default_stats_every")]
    pub stats_every: usize,
}

fn default_rate() -> f64 {
    PIPELINE_RATE_HZ
}

fn default_baseline() -> BaselineMode {
    BaselineMode::FromStream
}

fn default_stats_every() -> usize {
    10
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.rate_hz != PIPELINE_RATE_HZ {
            return Err(StreamError::Config(format!("rate_hz must be 128, got {}", self.rate_hz)));
        }
        if self.channels.len() != 5 && self.channels.len() != 32 {
            return Err(StreamError::Config(format!(
                "5 or 32 channels required, got {}",
                self.channels.len()
            )));
        }
        match (&self.valence_model, &self.arousal_model, &self.chained_model) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => Ok(()),
            _ => Err(StreamError::Config(
                "give either valence_model and arousal_model, or chained_model".into(),
            )),
        }
    }

    /// Paths in the config are taken relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.valence_model, &mut self.arousal_model, &mut self.chained_model]
            .into_iter()
            .flatten()
        {
            *p = dir.join(&*p);
        }
        if let BaselineMode::FromFile(p) = &mut self.baseline {
            *p = dir.join(&*p);
        }
    }
}

/// Collects ticks into non-overlapping windows.
#[derive(Debug, Clone)]
pub struct WindowAccumulator {
    channels: Vec<ChannelId>,
    size: WindowSize,
    width: usize,
    buffers: Vec<Vec<f64>>,
    emitted: usize,
    accepted: u64,
}

impl WindowAccumulator {
    pub fn new(channels: Vec<ChannelId>, size: WindowSize, rate_hz: f64) -> Self {
        let width = size.samples(rate_hz);
        Self {
            buffers: vec![Vec::with_capacity(width); channels.len()],
            channels,
            size,
            width,
            emitted: 0,
            accepted: 0,
        }
    }

    pub fn fill(&self) -> usize {
        self.buffers.first().map_or(0, Vec::len)
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Ticks accepted so far.
    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Buffers one tick; returns the window it completes, if any.
    pub fn push(&mut self, tick: &[f64]) -> Result<Option<Window>, StreamError> {
        if tick.len() != self.channels.len() {
            return Err(StreamError::Arity {
                position: self.accepted,
                expected: self.channels.len(),
                actual: tick.len(),
            });
        }
        for (buf, v) in self.buffers.iter_mut().zip(tick) {
            buf.push(*v);
        }
        self.accepted += 1;
        if self.fill() < self.width {
            return Ok(None);
        }
        let samples = Array2::from_shape_fn((self.channels.len(), self.width), |(c, t)| {
            self.buffers[c][t]
        });
        self.buffers.iter_mut().for_each(Vec::clear);
        let index = self.emitted;
        self.emitted += 1;
        Ok(Some(Window {
            index,
            channels: self.channels.clone(),
            samples,
            size: self.size,
        }))
    }
}

#[derive(Debug, Clone)]
pub enum StreamModel {
    Pair { valence: TrainedSvm, arousal: TrainedSvm },
    Chained(ChainedModel),
}

impl StreamModel {
    fn n_features(&self) -> usize {
        match self {
            StreamModel::Pair { valence, .. } => valence.n_features(),
            StreamModel::Chained(m) => m.first.n_features(),
        }
    }

    fn check(&self, n_features: usize, channels: usize) -> Result<(), StreamError> {
        let dims: Vec<usize> = match self {
            StreamModel::Pair { valence, arousal } => vec![valence.n_features(), arousal.n_features()],
            StreamModel::Chained(m) => vec![m.first.n_features(), m.second.n_features() - 1],
        };
        match dims.into_iter().find(|d| *d != n_features) {
            Some(expected) => Err(StreamError::ModelDimension {
                expected,
                actual: n_features,
                channels,
            }),
            None => Ok(()),
        }
    }
}

/// A single or chained model read from disk, told apart by its magic.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Single(TrainedSvm),
    Chained(ChainedModel),
}

pub fn load_model_file(path: &Path) -> Result<ModelFile, StreamError> {
    let bytes = std::fs::read(path).map_err(|source| StreamError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| StreamError::Model {
        path: path.to_path_buf(),
        source,
    };
    if bytes.starts_with(CHAINED_MAGIC) {
        read_chained(&mut bytes.as_slice()).map(ModelFile::Chained).map_err(wrap)
    } else if bytes.starts_with(MODEL_MAGIC) {
        read_model(&mut bytes.as_slice()).map(ModelFile::Single).map_err(wrap)
    } else {
        Err(wrap(SvmError::Format("not a model file".into())))
    }
}

/// Loads the models named in `cfg`.
pub fn load_models(cfg: &StreamConfig) -> Result<StreamModel, StreamError> {
    let single = |p: &Path| match load_model_file(p)? {
        ModelFile::Single(m) => Ok(m),
        ModelFile::Chained(_) => Err(StreamError::Config(format!(
            "{} is a chained model; use chained_model",
            p.display()
        ))),
    };
    match (&cfg.valence_model, &cfg.arousal_model, &cfg.chained_model) {
        (Some(v), Some(a), None) => Ok(StreamModel::Pair {
            valence: single(v)?,
            arousal: single(a)?,
        }),
        (None, None, Some(c)) => match load_model_file(c)? {
            ModelFile::Chained(m) => Ok(StreamModel::Chained(m)),
            ModelFile::Single(_) => Err(StreamError::Config(format!(
                "{} is not a chained model",
                c.display()
            ))),
        },
        _ => Err(StreamError::Config(
            "give either valence_model and arousal_model, or chained_model".into(),
        )),
    }
}

/// Result of classifying one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowResult {
    pub window: usize,
    pub valence: &'static str,
    pub arousal: &'static str,
    pub quadrant: Quadrant,
    pub dv_val: f64,
    pub dv_aro: f64,
    pub latency_ms: f64,
}

/// Everything needed to turn a window into a prediction.
#[derive(Debug, Clone)]
pub struct Classifier {
    channels: Vec<ChannelId>,
    size: WindowSize,
    extractor: FeatureExtractor,
    model: StreamModel,
}

impl Classifier {
    pub fn new(
        channels: Vec<ChannelId>,
        size: WindowSize,
        mode: BoundaryMode,
        model: StreamModel,
    ) -> Result<Self, StreamError> {
        model.check(channels.len() * crate::features::PER_CHANNEL, channels.len())?;
        Ok(Self {
            channels,
            size,
            extractor: FeatureExtractor::new(mode),
            model,
        })
    }

    pub fn n_features(&self) -> usize {
        self.model.n_features()
    }

    /// Rest-state reference from a `[channels × 3 s]` block.
    pub fn reference(&self, baseline: &Array2<f64>) -> Result<BaselineReference, StreamError> {
        Ok(self
            .extractor
            .baseline_reference(&self.channels, baseline.view(), PIPELINE_RATE_HZ, self.size)?)
    }

    pub fn classify(
        &self,
        window: &Window,
        reference: &BaselineReference,
    ) -> Result<WindowResult, StreamError> {
        let start = Instant::now();
        let bf = self.extractor.window(window)?;
        let v = assemble_vector(&remove_baseline(&bf, reference)?)?;
        let (val, aro) = match &self.model {
            StreamModel::Pair { valence, arousal } => {
                (predict(valence, &v.values)?, predict(arousal, &v.values)?)
            }
            StreamModel::Chained(m) => {
                let p = predict_chained(m, &v.values)?;
                (p.valence, p.arousal)
            }
        };
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(WindowResult {
            window: window.index,
            valence: val.label.short(),
            arousal: aro.label.short(),
            quadrant: quadrant_of(val.label, aro.label),
            dv_val: val.decision,
            dv_aro: aro.decision,
            latency_ms,
        })
    }
}

/// [`Classifier::classify`] as a free function.
pub fn classify_window(
    window: &Window,
    classifier: &Classifier,
    reference: &BaselineReference,
) -> Result<WindowResult, StreamError> {
    classifier.classify(window, reference)
}

/// Reads a 3 s rest recording: header of channel names, one row per sample.
pub fn read_baseline_csv(path: &Path, channels: &[ChannelId]) -> Result<Array2<f64>, StreamError> {
    let fail = |message: String| StreamError::Baseline {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let header = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let names = header
        .iter()
        .map(|h| h.parse::<ChannelId>().map_err(|e| fail(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if names != channels {
        return Err(fail(format!("header {names:?} does not match configured channels")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| fail(format!("row {}: `{c}` is not a number", i + 2))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let expected = BASELINE_SECS * PIPELINE_RATE_HZ as usize;
    if rows.len() != expected {
        return Err(fail(format!("{} rows, expected {expected}", rows.len())));
    }
    Ok(Array2::from_shape_fn((channels.len(), expected), |(c, t)| rows[t][c]))
}

#[derive(Debug, Deserialize)]
struct Tick {
    s: Vec<f64>,
}

/// Counters for one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionStats {
    pub lines: u64,
    pub ticks: u64,
    pub malformed: u64,
    pub windows: usize,
    pub queue_depth: usize,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
}

fn handshake(cfg: &StreamConfig, classifier: &Classifier) -> serde_json::Value {
    json!({
        "protocol": PROTOCOL,
        "version": PROTOCOL_VERSION,
        "channels": cfg.channels,
        "rate_hz": cfg.rate_hz,
        "tau_s": cfg.tau_s,
        "n_features": classifier.n_features(),
        "baseline": match cfg.baseline {
            BaselineMode::FromStream => "stream",
            BaselineMode::FromFile(_) => "file",
        },
    })
}

fn write_record(w: &mut impl Write, v: &impl Serialize) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    w.flush()
}

enum Job {
    Reference(Box<BaselineReference>),
    Window(Window),
}

/// One client session: reads ticks from `input` until end of input or until
/// `stop` is set, writes the handshake and predictions to `out`, and error and
/// stats records to `diag`.
///
/// Windows are classified on a worker thread in arrival order through an
/// unbounded queue, so a slow window delays later ones but never drops them.
pub fn run_session<R, W, E>(
    cfg: &StreamConfig,
    classifier: &Classifier,
    file_reference: Option<&BaselineReference>,
    input: R,
    out: &mut W,
    diag: &mut E,
    stop: &AtomicBool,
) -> Result<SessionStats, StreamError>
where
    R: BufRead,
    W: Write + Send,
    E: Write,
{
    write_record(out, &handshake(cfg, classifier))?;
    let pending = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Job>();

    std::thread::scope(|scope| {
        let pending = &pending;
        let worker = scope.spawn(move || -> Result<(usize, f64, f64), StreamError> {
            let mut reference: Option<Box<BaselineReference>> = None;
            let (mut n, mut sum, mut max) = (0usize, 0.0f64, 0.0f64);
            for job in rx {
                match job {
                    Job::Reference(r) => reference = Some(r),
                    Job::Window(w) => {
                        let r = reference.as_deref().expect("reference precedes windows");
                        let result = classifier.classify(&w, r)?;
                        n += 1;
                        sum += result.latency_ms;
                        max = max.max(result.latency_ms);
                        write_record(out, &result)?;
                    }
                }
                pending.fetch_sub(1, Ordering::SeqCst);
            }
            Ok((n, if n > 0 { sum / n as f64 } else { 0.0 }, max))
        });

        let mut stats = SessionStats::default();
        let mut baseline = match file_reference {
            Some(r) => {
                pending.fetch_add(1, Ordering::SeqCst);
                let _ = tx.send(Job::Reference(Box::new(r.clone())));
                None
            }
            None => Some(WindowAccumulator::new(
                cfg.channels.clone(),
                WindowSize::ThreeSeconds,
                cfg.rate_hz,
            )),
        };
        let mut acc = WindowAccumulator::new(cfg.channels.clone(), cfg.tau_s, cfg.rate_hz);
        let mut failure = None;

        for line in input.lines() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    failure = Some(StreamError::Transport(e));
                    break;
                }
            };
            stats.lines += 1;
            if line.trim().is_empty() {
                continue;
            }
            let tick = match serde_json::from_str::<Tick>(&line) {
                Ok(t) if t.s.len() == cfg.channels.len() => t,
                Ok(t) => {
                    stats.malformed += 1;
                    let _ = write_record(
                        diag,
                        &json!({"error": "arity", "line": stats.lines, "expected": cfg.channels.len(), "actual": t.s.len()}),
                    );
                    continue;
                }
                Err(e) => {
                    stats.malformed += 1;
                    let _ = write_record(diag, &json!({"error": "parse", "line": stats.lines, "message": e.to_string()}));
                    continue;
                }
            };
            stats.ticks += 1;
            if let Some(cap) = baseline.as_mut() {
                if let Some(block) = cap.push(&tick.s)? {
                    match classifier.reference(&block.samples) {
                        Ok(r) => {
                            pending.fetch_add(1, Ordering::SeqCst);
                            let _ = tx.send(Job::Reference(Box::new(r)));
                        }
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    }
                    baseline = None;
                }
                continue;
            }
            if let Some(w) = acc.push(&tick.s)? {
                pending.fetch_add(1, Ordering::SeqCst);
                if tx.send(Job::Window(w)).is_err() {
                    break;
                }
                if cfg.stats_every > 0 && acc.emitted().is_multiple_of(cfg.stats_every) {
                    let snapshot = json!({"stats": {
                        "ticks": stats.ticks,
                        "malformed": stats.malformed,
                        "windows": acc.emitted(),
                        "queue_depth": pending.load(Ordering::SeqCst),
                    }});
                    let _ = write_record(diag, &snapshot);
                }
            }
        }
        drop(tx);
        let (n, mean, max) = worker.join().expect("worker panicked")?;
        if let Some(e) = failure {
            return Err(e);
        }
        stats.windows = n;
        stats.mean_latency_ms = mean;
        stats.max_latency_ms = max;
        stats.queue_depth = pending.load(Ordering::SeqCst);
        let _ = write_record(diag, &json!({ "stats": stats, "final": true }));
        Ok(stats)
    })
}

/// Loads models and the optional file baseline for `cfg`.
pub fn prepare(cfg: &StreamConfig) -> Result<(Classifier, Option<BaselineReference>), StreamError> {
    cfg.validate()?;
    let model = load_models(cfg)?;
    let classifier = Classifier::new(cfg.channels.clone(), cfg.tau_s, cfg.boundary, model)?;
    let reference = match &cfg.baseline {
        BaselineMode::FromStream => None,
        BaselineMode::FromFile(p) => Some(classifier.reference(&read_baseline_csv(p, &cfg.channels)?)?),
    };
    Ok((classifier, reference))
}

/// Serves standard input, or every TCP client in turn when `listen` is set.
pub fn serve(cfg: &StreamConfig, stop: Arc<AtomicBool>) -> Result<(), StreamError> {
    let (classifier, reference) = prepare(cfg)?;
    match &cfg.listen {
        None => {
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout();
            let mut stderr = std::io::stderr();
            run_session(cfg, &classifier, reference.as_ref(), stdin.lock(), &mut stdout, &mut stderr, &stop)?;
            Ok(())
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|source| StreamError::Bind {
                addr: addr.clone(),
                source,
            })?;
            listener.set_nonblocking(true)?;
            log::info!("listening on {}", listener.local_addr()?);
            while !stop.load(Ordering::SeqCst) {
                let (socket, peer) = match listener.accept() {
                    Ok(c) => c,
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(50));
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                log::info!("client {peer} connected");
                socket.set_nonblocking(false)?;
                let mut writer = socket.try_clone()?;
                let mut stderr = std::io::stderr();
                match run_session(cfg, &classifier, reference.as_ref(), BufReader::new(socket), &mut writer, &mut stderr, &stop) {
                    Ok(s) => log::info!("client {peer} done: {} windows", s.windows),
                    Err(e) => log::warn!("client {peer}: {e}"),
                }
            }
            Ok(())
        }
    }
}
