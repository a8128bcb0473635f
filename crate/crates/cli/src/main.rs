use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use emowave_core::classifier::{
    grid_search, train_chained, train_smo, write_chained, write_model, ChainDirection, Gamma,
    ParamGrid, RbfParams, SmoConfig, SvmError,
};
use emowave_core::datastore::{
    generate_synthetic, import_csv_dir, read_dataset, write_dataset, DatastoreError, SynthSpec,
    CSV_IMPORT_FILE,
};
use emowave_core::evaluation::{
    build_samples, restrict_montage, run_experiment, stratified_subsample, write_reports, EvalError,
    ExperimentConfig,
};
use emowave_core::features::{channel_correlation, BandFeatures, FeatureError, FeatureExtractor};
use emowave_core::signal::{preprocess_recording, segment_windows, ChannelId, SignalError, WindowSize};
use emowave_core::stream::{serve, StreamConfig, StreamError};
use emowave_core::wavelet::SubBand;
use emowave_core::{EegRecording, Target};

#[derive(Debug, Error)]
#[error("{message}")]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn data(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: 3, message: message.to_string() }
    }
}

impl From<DatastoreError> for CliError {
    fn from(e: DatastoreError) -> Self {
        match e {
            DatastoreError::Io { .. } => CliError::runtime(e),
            _ => CliError::data(e),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::data(e)
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::data(e)
    }
}

fn svm_is_runtime(e: &SvmError) -> bool {
    matches!(e, SvmError::NotConverged { .. } | SvmError::Io(_))
}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> Self {
        if svm_is_runtime(&e) {
            CliError::runtime(e)
        } else {
            CliError::data(e)
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let mut inner = &e;
        while let EvalError::Subject { source, .. } = inner {
            inner = source;
        }
        match inner {
            EvalError::Fold { source, .. } if svm_is_runtime(source) => CliError::runtime(e),
            EvalError::Report(_) => CliError::runtime(e),
            _ => CliError::data(e),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Bind { .. } | StreamError::Transport(_) => CliError::runtime(e),
            _ => CliError::data(e),
        }
    }
}

/// Wavelet-feature EEG emotion recognition.
#[derive(Debug, Parser)]
#[command(name = "emowave", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TuneMode {
    Indep,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Bring raw 512 Hz recordings (or a CSV import directory) to the 128 Hz pipeline format.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_channels)]
        channels: Option<usize>,
    },
    /// Pearson correlation of one channel's entropy against every channel.
    Correlate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        probe: ChannelId,
        #[arg(long)]
        band: SubBand,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "1", value_parser = parse_tau)]
        tau: WindowSize,
    },
    /// Grid search over C and gamma on a stratified subsample of the pooled data.
    Tune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target: Target,
        #[arg(long, value_enum)]
        mode: TuneMode,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value = "1/3", value_parser = parse_fraction)]
        subsample: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "3", value_parser = parse_tau)]
        tau: WindowSize,
        #[arg(long, default_value = "32", value_parser = parse_channels)]
        channels: usize,
        #[arg(long)]
        baseline_removal: bool,
        /// Write the result table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model on every window of the dataset.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Required unless --chained is given; a chained model predicts both.
        #[arg(long, required_unless_present = "chained")]
        target: Option<Target>,
        #[arg(long)]
        chained: Option<ChainDirection>,
        #[arg(long, default_value = "3", value_parser = parse_tau)]
        tau: WindowSize,
        #[arg(long)]
        baseline_removal: bool,
        #[arg(long = "C", default_value_t = 200.0)]
        c: f64,
        #[arg(long, default_value = "scale")]
        gamma: Gamma,
        #[arg(long, default_value = "32", value_parser = parse_channels)]
        channels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiments described in a config file and write JSON-lines reports.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Classify a live sample stream.
    Stream {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "stdin")]
        listen: Option<String>,
        #[arg(long)]
        stdin: bool,
    },
}

fn parse_tau(s: &str) -> Result<WindowSize, String> {
    let secs: u32 = s.parse().map_err(|_| format!("`{s}` is not a whole number of seconds"))?;
    WindowSize::try_from(secs).map_err(|e| e.to_string())
}

fn parse_channels(s: &str) -> Result<usize, String> {
    match s {
        "5" => Ok(5),
        "32" => Ok(32),
        _ => Err(format!("channel count must be 5 or 32, got `{s}`")),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad fraction `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad fraction `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad fraction `{s}`"))?,
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction must be in (0, 1], got {v}"))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn load(input: &Path) -> Result<Vec<EegRecording>, CliError> {
    if !input.is_dir() {
        return Err(CliError::data(format!("{}: not a dataset directory", input.display())));
    }
    let recs = if input.join(CSV_IMPORT_FILE).is_file() {
        import_csv_dir(input)?
    } else {
        read_dataset(input)?
    };
    log::info!("loaded {} recordings from {}", recs.len(), input.display());
    Ok(recs)
}

fn synth(spec: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: SynthSpec = toml::from_str(&read_text(spec)?)
        .map_err(|e| CliError::data(format!("{}: {e}", spec.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let recs = generate_synthetic(&spec)?;
    write_dataset(&recs, out)?;
    log::info!("wrote {} trials to {}", recs.len(), out.display());
    Ok(())
}

fn preprocess(input: &Path, out: &Path, channels: Option<usize>) -> Result<(), CliError> {
    let recs = load(input)?;
    let mut done = Vec::with_capacity(recs.len());
    for r in &recs {
        let r = match r.sample_rate_hz {
            512.0 => preprocess_recording(r)?,
            128.0 => r.clone(),
            rate => {
                return Err(CliError::data(format!(
                    "subject {} trial {}: unsupported sample rate {rate} Hz",
                    r.subject_id, r.trial_id
                )))
            }
        };
        done.push(r);
    }
    if let Some(n) = channels {
        done = restrict_montage(&done, n)?;
    }
    write_dataset(&done, out)?;
    Ok(())
}

/// Mean band features of each trial's windows.
fn trial_means(recs: &[EegRecording], tau: WindowSize) -> Result<Vec<BandFeatures>, CliError> {
    let fx = FeatureExtractor::default();
    recs.iter()
        .map(|r| {
            let windows = segment_windows(r, tau)?;
            let mut sum = BandFeatures::zeros(r.channels.clone());
            for w in &windows {
                let f = fx.window(w)?;
                for (acc, v) in sum.values.iter_mut().zip(&f.values) {
                    for b in 0..acc.len() {
                        for d in 0..acc[b].len() {
                            acc[b][d] += v[b][d];
                        }
                    }
                }
            }
            let n = windows.len() as f64;
            sum.values.iter_mut().flatten().flatten().for_each(|v| *v /= n);
            Ok(sum)
        })
        .collect()
}

fn correlate(input: &Path, probe: ChannelId, band: SubBand, out: &Path, tau: WindowSize) -> Result<(), CliError> {
    let recs = load(input)?;
    let means = trial_means(&recs, tau)?;
    let r = channel_correlation(&means, probe, band)?;
    let mut f = create(out)?;
    let mut text = String::from("channel,r\n");
    for (ch, v) in r {
        text.push_str(&format!("{ch},{}\n", v.map(|v| v.to_string()).unwrap_or_default()));
    }
    f.write_all(text.as_bytes()).map_err(CliError::runtime)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tune(
    input: &Path,
    target: Target,
    k: usize,
    fraction: f64,
    seed: u64,
    tau: WindowSize,
    channels: usize,
    baseline_removal: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let recs = restrict_montage(&load(input)?, channels)?;
    let samples = build_samples(&recs, tau, baseline_removal, &FeatureExtractor::default())?;
    let idx = stratified_subsample(samples.labels(target), fraction, seed)?;
    let sub = samples.subset(&idx);
    log::info!("grid search on {} of {} windows", sub.len(), samples.len());
    let result = grid_search(
        sub.x.view(),
        sub.labels(target),
        &ParamGrid::default(),
        k,
        seed,
        &SmoConfig::default(),
    )
    .map_err(|e| match e {
        SvmError::Eval(inner) => CliError::from(*inner),
        other => CliError::from(other),
    })?;
    let text = serde_json::to_string_pretty(&result).map_err(CliError::runtime)? + "\n";
    match out {
        Some(p) => create(p)?.write_all(text.as_bytes()).map_err(CliError::runtime)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    input: &Path,
    target: Option<Target>,
    chained: Option<ChainDirection>,
    tau: WindowSize,
    baseline_removal: bool,
    params: RbfParams,
    channels: usize,
    out: &Path,
) -> Result<(), CliError> {
    params.validate()?;
    let recs = restrict_montage(&load(input)?, channels)?;
    let samples = build_samples(&recs, tau, baseline_removal, &FeatureExtractor::default())?;
    let cfg = SmoConfig::default();
    let mut f = create(out)?;
    match chained {
        Some(dir) => {
            if target.is_some() {
                log::info!("--target ignored: a chained model predicts both dimensions");
            }
            let m = train_chained(samples.x.view(), &samples.valence, &samples.arousal, dir, params, &cfg)?;
            write_chained(&mut f, &m)?;
        }
        None => {
            let target = target.ok_or_else(|| CliError::usage("--target is required"))?;
            let m = train_smo(samples.x.view(), samples.labels(target), params, &cfg)?;
            log::info!("{} support vectors, gamma {}", m.n_support(), m.gamma);
            write_model(&mut f, &m)?;
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalPlan {
    experiment: Vec<ExperimentConfig>,
}

fn eval(input: &Path, config: &Path, seed: u64, report: &Path) -> Result<(), CliError> {
    let text = read_text(config)?;
    let plans = match toml::from_str::<EvalPlan>(&text) {
        Ok(p) => p.experiment,
        Err(multi) => vec![toml::from_str::<ExperimentConfig>(&text).map_err(|single| {
            CliError::data(format!(
                "{}: not a single experiment ({single}) nor an [[experiment]] list ({multi})",
                config.display()
            ))
        })?],
    };
    let recs = load(input)?;
    let mut reports = Vec::with_capacity(plans.len());
    for plan in &plans {
        let r = run_experiment(&recs, plan, seed)?;
        log::info!(
            "{} {:?} {}ch tau {} {}: {:.4} ± {:.4}",
            r.target,
            r.mode,
            r.channels,
            r.tau_s.secs(),
            r.model,
            r.mean,
            r.stddev
        );
        reports.push(r);
    }
    let mut f = create(report)?;
    write_reports(&mut f, &reports)?;
    Ok(())
}

fn stream(config: &Path, listen: Option<String>, stdin: bool) -> Result<(), CliError> {
    let mut cfg: StreamConfig = toml::from_str(&read_text(config)?)
        .map_err(|e| CliError::data(format!("{}: {e}", config.display())))?;
    if let Some(dir) = config.parent() {
        cfg.resolve_paths(dir);
    }
    if stdin {
        cfg.listen = None;
    } else if listen.is_some() {
        cfg.listen = listen;
    }
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [libc::SIGINT, libc::SIGTERM] {
        let flag = Arc::clone(&stop);
        // SAFETY: the handler only touches an atomic and calls `_exit`, both
        // async-signal-safe.
        unsafe {
            signal_hook_registry::register(sig, move || {
                if flag.swap(true, Ordering::SeqCst) {
                    libc::_exit(130);
                }
            })
        }
        .map_err(CliError::runtime)?;
    }
    serve(&cfg, stop)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Preprocess { input, out, channels } => preprocess(&input, &out, channels),
        Command::Correlate { input, probe, band, out, tau } => correlate(&input, probe, band, &out, tau),
        Command::Tune {
            input,
            target,
            mode: TuneMode::Indep,
            k,
            subsample,
            seed,
            tau,
            channels,
            baseline_removal,
            out,
        } => tune(&input, target, k, subsample, seed, tau, channels, baseline_removal, out.as_deref()),
        Command::Train {
            input,
            target,
            chained,
            tau,
            baseline_removal,
            c,
            gamma,
            channels,
            out,
        } => train(&input, target, chained, tau, baseline_removal, RbfParams { c, gamma }, channels, &out),
        Command::Eval { input, config, seed, report } => eval(&input, &config, seed, &report),
        Command::Stream { config, listen, stdin } => stream(&config, listen, stdin),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
