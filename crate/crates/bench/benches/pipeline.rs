use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use emowave_bench::{signal, subject};
use emowave_core::classifier::{train_smo, Gamma, RbfParams, SmoConfig};
use emowave_core::evaluation::build_samples;
use emowave_core::signal::{segment_windows, WindowSize};
use emowave_core::stream::{classify_window, Classifier, StreamModel};
use emowave_core::wavelet::{db4_filter, dwt_decompose, BoundaryMode};
use emowave_core::{FeatureExtractor, Target};

fn dwt(c: &mut Criterion) {
    let f = db4_filter();
    let mut g = c.benchmark_group("dwt_db4_4_levels");
    for len in [128, 384, 7680] {
        let x = signal(len, 1);
        for mode in [BoundaryMode::Symmetric, BoundaryMode::Periodization] {
            g.bench_with_input(BenchmarkId::new(format!("{mode:?}"), len), &x, |b, x| {
                b.iter(|| dwt_decompose(black_box(x), 4, &f, mode).unwrap())
            });
        }
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let fx = FeatureExtractor::default();
    let mut g = c.benchmark_group("window_features");
    for channels in [5, 32] {
        let rec = &subject(channels, 2, 3)[0];
        for tau in [WindowSize::OneSecond, WindowSize::ThreeSeconds] {
            let w = &segment_windows(rec, tau).unwrap()[0];
            g.bench_function(BenchmarkId::new(format!("{channels}ch"), tau.secs()), |b| {
                b.iter(|| fx.window(black_box(w)).unwrap())
            });
        }
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let recs = subject(32, 40, 12);
    let fx = FeatureExtractor::default();
    let mut g = c.benchmark_group("smo_train");
    g.sample_size(10);
    for tau in [WindowSize::ThreeSeconds, WindowSize::OneSecond] {
        let s = build_samples(&recs, tau, true, &fx).unwrap();
        let y = s.labels(Target::Valence).to_vec();
        g.bench_function(BenchmarkId::new("256_features", s.len()), |b| {
            b.iter(|| {
                train_smo(s.x.view(), &y, RbfParams { c: 200.0, gamma: Gamma::Scale }, &SmoConfig::default())
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn streaming(c: &mut Criterion) {
    let mut g = c.benchmark_group("classify_window");
    for channels in [5, 32] {
        let recs = subject(channels, 16, 12);
        let fx = FeatureExtractor::default();
        for tau in [WindowSize::OneSecond, WindowSize::ThreeSeconds] {
            let s = build_samples(&recs, tau, true, &fx).unwrap();
            let params = RbfParams { c: 200.0, gamma: Gamma::Scale };
            let cfg = SmoConfig::default();
            let model = StreamModel::Pair {
                valence: train_smo(s.x.view(), s.labels(Target::Valence), params, &cfg).unwrap(),
                arousal: train_smo(s.x.view(), s.labels(Target::Arousal), params, &cfg).unwrap(),
            };
            let rec = &recs[0];
            let classifier = Classifier::new(rec.channels.clone(), tau, BoundaryMode::Symmetric, model).unwrap();
            let reference = classifier.reference(&rec.baseline).unwrap();
            let w = &segment_windows(rec, tau).unwrap()[0];
            g.bench_function(BenchmarkId::new(format!("{channels}ch"), tau.secs()), |b| {
                b.iter(|| classify_window(black_box(w), &classifier, &reference).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, dwt, features, training, streaming);
criterion_main!(benches);
