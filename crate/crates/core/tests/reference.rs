//! Values frozen from PyWavelets and SciPy (see `data/gen_reference.py`).

use emowave_core::signal::{butterworth_bandpass, SosFilter};
use emowave_core::wavelet::{db4_filter, dwt_decompose, idwt_reconstruct, BoundaryMode};

const PYWT_DEC_LO: [f64; 8] = [-0.010597401785069032, 0.0328830116668852, 0.030841381835560764, -0.18703481171909309, -0.027983769416859854, 0.6308807679298589, 0.7148465705529157, 0.2303778133088965];
const SYM_A4: [f64; 8] = [2.7307865171726284, 2.696455975879707, 2.4911647052790484, 2.578598681414893, 3.2007864668872874, 0.919180211265858, 2.512177860585833, 3.310732909542463];
const SYM_D4: [f64; 8] = [-0.08191421961829393, -0.3211656664725587, -0.6288468538637882, -3.0865915348848705, 0.6858135017102504, -0.2952539563484613, 0.4915364506013923, 3.125720664594927];
const SYM_D3: [f64; 10] = [0.4450730614625073, 1.4108949972654317, -0.45157836798102147, -0.15905430680140625, -0.11001475917505169, 0.8858240047459719, -0.47530770252954174, 0.22482945802457388, -0.773226502781174, 0.33421046506199825];
const SYM_D2: [f64; 13] = [0.1411571798066897, 0.5691593017522384, 0.8548975474028816, 0.4588601776711085, 0.39744994833589126, 0.248584654803089, -0.001750957228296622, -0.33368176392097126, -0.6171221043139268, -0.7129460258961374, 1.1852620672500893, 0.28487361673103045, 0.17012128354662673];
const SYM_D1: [f64; 19] = [-0.024390198846768588, -0.23722209675035444, 0.23932341415214584, -0.15473775550491292, 0.0028116909085813884, 0.1354276329219207, -0.27363587051915417, 0.3927541620090642, -0.47834820948019263, 0.545385252507438, -0.5618502006414059, 0.5514971505402894, -0.5015622348759006, 0.41271763577931203, -0.30867814426397927, 0.16958901636018112, -0.07648571816396046, 0.03586341593624436, 0.08398468508383067];
const BUTTER_SOS: [[f64; 6]; 4] = [
    [0.00224252077988616, 0.00448504155977232, 0.00224252077988616, 1.0, -1.2678911096143994, 0.4248140241784622],
    [1.0, 2.0, 1.0, 1.0, -1.4657503137243333, 0.7113199716366561],
    [1.0, -2.0, 1.0, 1.0, -1.8998817365636782, 0.9030391682216362],
    [1.0, -2.0, 1.0, 1.0, -1.9653755867762528, 0.9678377330615006],
];
const FILTFILT_IDX: [usize; 6] = [0, 1, 100, 511, 900, 1023];
const FILTFILT_VAL: [f64; 6] = [0.047826863445190104, 0.17569443607605384, -0.3067997264973627, -0.1255104984970385, -0.4902684182236836, -0.27593283587508965];

const H2_10HZ: f64 = 0.9999974302116972;
const H2_60HZ: f64 = 0.056800588752456846;

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

fn test_signal() -> Vec<f64> {
    (0..32)
        .map(|n| {
            let n = n as f64;
            (0.3 * n).sin() + 0.5 * (1.7 * n).cos() + n / 50.0
        })
        .collect()
}

#[test]
fn db4_matches_pywt_decomposition_lowpass() {
    let f = db4_filter();
    let mut lo = f.lowpass.clone();
    lo.reverse();
    close(&lo, &PYWT_DEC_LO, 1e-12);
}

#[test]
fn symmetric_wavedec_matches_pywt() {
    let d = dwt_decompose(&test_signal(), 4, &db4_filter(), BoundaryMode::Symmetric).unwrap();
    close(&d.approx, &SYM_A4, 1e-10);
    close(d.detail(4), &SYM_D4, 1e-10);
    close(d.detail(3), &SYM_D3, 1e-10);
    close(d.detail(2), &SYM_D2, 1e-10);
    close(d.detail(1), &SYM_D1, 1e-10);
}

#[test]
fn symmetric_round_trip_recovers_the_signal() {
    let x = test_signal();
    let d = dwt_decompose(&x, 4, &db4_filter(), BoundaryMode::Symmetric).unwrap();
    close(&idwt_reconstruct(&d, &db4_filter()).unwrap(), &x, 1e-10);
}

fn power(f: &SosFilter, hz: f64) -> f64 {
    let (re, im) = f.response(hz, 512.0);
    re * re + im * im
}

#[test]
fn butterworth_response_matches_scipy() {
    let ours = butterworth_bandpass(4, 4.0, 45.0, 512.0);
    let scipy = SosFilter { sections: BUTTER_SOS.to_vec() };
    assert_eq!(ours.sections.len(), 4);
    assert!((power(&ours, 10.0) - H2_10HZ).abs() < 1e-9);
    assert!((power(&ours, 60.0) - H2_60HZ).abs() < 1e-9);
    for hz in [0.5, 2.0, 4.0, 8.0, 20.0, 45.0, 80.0, 200.0] {
        assert!((power(&ours, hz) - power(&scipy, hz)).abs() < 1e-9, "{hz} Hz");
    }
}

#[test]
fn filtfilt_matches_scipy() {
    use std::f64::consts::PI;
    let y: Vec<f64> = (0..1024)
        .map(|i| {
            let t = i as f64 / 512.0;
            (2.0 * PI * 10.0 * t).sin() + 0.3 * (2.0 * PI * 70.0 * t).sin() + 0.2 * (2.0 * PI * 1.5 * t).sin()
        })
        .collect();
    let f = butterworth_bandpass(4, 4.0, 45.0, 512.0).filtfilt(&y).unwrap();
    let got: Vec<f64> = FILTFILT_IDX.iter().map(|&i| f[i]).collect();
    close(&got, &FILTFILT_VAL, 1e-9);
}
