mod common;

use emowave_core::datastore::{generate_synthetic, ClassEffect, SynthSpec};
use emowave_core::evaluation::{
    build_samples, read_reports, run_experiment, write_reports, EvalError, ExperimentConfig,
    ModelKind, Mode,
};
use emowave_core::signal::{BinaryLabel, WindowSize};
use emowave_core::{FeatureExtractor, Target};

fn data(n_subjects: u32, n_trials: u32) -> Vec<emowave_core::EegRecording> {
    generate_synthetic(&SynthSpec {
        evoked_secs: 12,
        ..common::strong_spec(4, n_subjects, n_trials, 5)
    })
    .unwrap()
}

fn config(target: Target, mode: Mode) -> ExperimentConfig {
    ExperimentConfig::new(target, mode, 5, WindowSize::ThreeSeconds)
}

#[test]
fn sample_counts_per_subject() {
    let recs = generate_synthetic(&SynthSpec {
        class_effect: ClassEffect::none(),
        ..SynthSpec::new(1, 1, 40, 5)
    })
    .unwrap();
    let fx = FeatureExtractor::default();
    let one = build_samples(&recs, WindowSize::OneSecond, true, &fx).unwrap();
    let three = build_samples(&recs, WindowSize::ThreeSeconds, false, &fx).unwrap();
    assert_eq!(one.len(), 2400);
    assert_eq!(three.len(), 800);
    assert_eq!(one.x.ncols(), 40);
    assert_eq!(one.valence.iter().filter(|&&l| l == BinaryLabel::High).count(), 1200);
}

#[test]
fn identical_runs_give_identical_reports() {
    let recs = data(2, 16);
    let cfg = config(Target::Valence, Mode::SubjectDependent);
    let a = run_experiment(&recs, &cfg, 9).unwrap();
    let b = run_experiment(&recs, &cfg, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.is_consistent());
    assert_eq!(a.per_fold_accuracy.len(), 2);
    assert_eq!(a.per_subject.as_ref().unwrap().len(), 2);
    assert_eq!(a.k, 8);
    assert_eq!(a.n_samples, 2 * 16 * 4);
}

#[test]
fn subject_independent_pools_everything() {
    let recs = data(3, 12);
    let r = run_experiment(&recs, &config(Target::Arousal, Mode::SubjectIndependent), 3).unwrap();
    assert_eq!(r.k, 6);
    assert_eq!(r.per_fold_accuracy.len(), 6);
    assert!(r.per_subject.is_none());
    assert!(r.mean > 0.9, "{}", r.mean);
}

#[test]
fn chained_models_run_end_to_end() {
    let recs = data(2, 16);
    for (target, model) in [(Target::Valence, ModelKind::ValAro), (Target::Arousal, ModelKind::AroVal)] {
        let cfg = ExperimentConfig { model, ..config(target, Mode::SubjectDependent) };
        let r = run_experiment(&recs, &cfg, 1).unwrap();
        assert_eq!(r.model, model);
        assert!(r.mean > 0.9);
    }
}

#[test]
fn too_few_trials_name_the_subject() {
    let recs = data(2, 4);
    let cfg = ExperimentConfig { k: Some(8), grouped: true, ..config(Target::Valence, Mode::SubjectDependent) };
    match run_experiment(&recs, &cfg, 1) {
        Err(EvalError::Subject { subject, .. }) => assert_eq!(subject, 1),
        other => panic!("expected a subject error, got {other:?}"),
    }
}

#[test]
fn reports_round_trip_as_json_lines() {
    let recs = data(2, 8);
    let reports: Vec<_> = [Target::Valence, Target::Arousal]
        .into_iter()
        .map(|t| run_experiment(&recs, &config(t, Mode::SubjectIndependent), 2).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_reports(&mut buf, &reports).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
    assert_eq!(read_reports(&buf[..]).unwrap(), reports);
}

#[test]
fn config_rejects_unknown_fields() {
    let ok: ExperimentConfig = toml::from_str(
        "target = \"aro\"\nmode = \"indep\"\nchannels = 32\ntau_s = 1\nbaseline_removed = true\nparams = { C = 50.0, gamma = 1.0 }\n",
    )
    .unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(ok.folds(), 6);
    assert_eq!(ok.params.c, 50.0);
    assert!(toml::from_str::<ExperimentConfig>(
        "target = \"aro\"\nmode = \"indep\"\nchannels = 32\ntau_s = 1\nbaseline_removed = true\nlearning_rate = 2\n"
    )
    .is_err());
}
