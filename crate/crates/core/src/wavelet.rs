//! Daubechies-4 discrete wavelet transform and the entropy/energy sub-band
//! descriptors computed from its detail coefficients.
//!
//! Analysis correlates the signal with the lowpass `h` and highpass `g`
//! filters at even offsets; synthesis is the exact transpose for
//! periodization and the matching "valid" upsampling convolution for
//! half-sample symmetric extension. Coefficient counts follow the usual
//! wavelet-toolkit conventions: `N / 2` per level for periodization and
//! `(N + 7) / 2` for symmetric extension.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Levels used by the feature pipeline.
pub const PIPELINE_LEVELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("signal of length {len} is too short for a {levels}-level transform (minimum {min})")]
    TooShort { len: usize, levels: usize, min: usize },
    #[error("periodization needs a length divisible by {divisor}, got {len}")]
    NotDyadic { len: usize, divisor: usize },
    #[error("at least one decomposition level is required")]
    NoLevels,
    #[error("inconsistent coefficient lengths: {0}")]
    Inconsistent(String),
    #[error("level {level} at {rate_hz} Hz has no sub-band mapping")]
    NoBand { level: usize, rate_hz: f64 },
    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),
}

/// Orthogonal two-channel filter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFilter {
    /// Builds the pair from a scaling filter; `g[n] = (-1)^n · h[L-1-n]`.
    pub fn from_lowpass(lowpass: Vec<f64>) -> Self {
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|n| {
                let v = lowpass[len - 1 - n];
                if n % 2 == 0 { v } else { -v }
            })
            .collect();
        Self { lowpass, highpass }
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }
}

const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// The 8-tap Daubechies-4 decomposition pair.
pub fn db4_filter() -> WaveletFilter {
    WaveletFilter::from_lowpass(DB4_LOWPASS.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Circular extension; the transform is orthonormal.
    Periodization,
    /// Half-sample symmetric extension (`... x1 x0 | x0 x1 ...`).
    #[default]
    Symmetric,
}

/// Approximation `A_L` and details `D_1..D_L` of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DwtDecomposition {
    pub approx: Vec<f64>,
    /// `details[0]` is D1 (finest), `details[L-1]` is D_L.
    pub details: Vec<Vec<f64>>,
    pub mode: BoundaryMode,
    /// Input length at each level, `lengths[0]` being the original signal.
    pub lengths: Vec<usize>,
}

impl DwtDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn input_length(&self) -> usize {
        self.lengths[0]
    }

    /// Detail series for `level` in `1..=levels`.
    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    /// Sum of squares over every coefficient series.
    pub fn total_energy(&self) -> f64 {
        self.approx
            .iter()
            .chain(self.details.iter().flatten())
            .map(|c| c * c)
            .sum()
    }
}

/// Coefficient count produced by one analysis step.
fn coeff_len(n: usize, filter_len: usize, mode: BoundaryMode) -> usize {
    match mode {
        BoundaryMode::Periodization => n / 2,
        BoundaryMode::Symmetric => (n + filter_len - 1) / 2,
    }
}

/// Index into the half-sample symmetric extension of a length-`n` signal.
#[inline]
fn symmetric_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn analyze(x: &[f64], filter: &WaveletFilter, mode: BoundaryMode) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let taps = filter.len();
    let out_len = coeff_len(n, taps, mode);
    let mut approx = Vec::with_capacity(out_len);
    let mut detail = Vec::with_capacity(out_len);
    match mode {
        BoundaryMode::Periodization => {
            for k in 0..out_len {
                let (mut a, mut d) = (0.0, 0.0);
                for m in 0..taps {
                    let v = x[(2 * k + m) % n];
                    a += filter.lowpass[m] * v;
                    d += filter.highpass[m] * v;
                }
                approx.push(a);
                detail.push(d);
            }
        }
        BoundaryMode::Symmetric => {
            let offset = taps as isize - 2;
            for k in 0..out_len {
                let (mut a, mut d) = (0.0, 0.0);
                let start = 2 * k as isize - offset;
                for m in 0..taps {
                    let idx = start + m as isize;
                    let v = if idx >= 0 && (idx as usize) < n {
                        x[idx as usize]
                    } else {
                        x[symmetric_index(idx, n)]
                    };
                    a += filter.lowpass[m] * v;
                    d += filter.highpass[m] * v;
                }
                approx.push(a);
                detail.push(d);
            }
        }
    }
    (approx, detail)
}

fn synthesize(
    approx: &[f64],
    detail: &[f64],
    filter: &WaveletFilter,
    mode: BoundaryMode,
    out_len: usize,
) -> Vec<f64> {
    let taps = filter.len();
    let mut out = vec![0.0; out_len];
    match mode {
        BoundaryMode::Periodization => {
            for (k, (a, d)) in approx.iter().zip(detail).enumerate() {
                for m in 0..taps {
                    out[(2 * k + m) % out_len] += a * filter.lowpass[m] + d * filter.highpass[m];
                }
            }
        }
        BoundaryMode::Symmetric => {
            let offset = taps as isize - 2;
            for (k, (a, d)) in approx.iter().zip(detail).enumerate() {
                let start = 2 * k as isize - offset;
                for m in 0..taps {
                    let idx = start + m as isize;
                    if idx >= 0 && (idx as usize) < out_len {
                        out[idx as usize] += a * filter.lowpass[m] + d * filter.highpass[m];
                    }
                }
            }
        }
    }
    out
}

/// Multi-level analysis cascade.
pub fn dwt_decompose(
    signal: &[f64],
    levels: usize,
    filter: &WaveletFilter,
    mode: BoundaryMode,
) -> Result<DwtDecomposition, WaveletError> {
    if levels == 0 {
        return Err(WaveletError::NoLevels);
    }
    let min = 1usize << levels;
    if signal.len() < min {
        return Err(WaveletError::TooShort {
            len: signal.len(),
            levels,
            min,
        });
    }
    if mode == BoundaryMode::Periodization && !signal.len().is_multiple_of(min) {
        return Err(WaveletError::NotDyadic {
            len: signal.len(),
            divisor: min,
        });
    }
    let mut lengths = Vec::with_capacity(levels + 1);
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        lengths.push(current.len());
        let (a, d) = analyze(&current, filter, mode);
        details.push(d);
        current = a;
    }
    lengths.push(current.len());
    Ok(DwtDecomposition {
        approx: current,
        details,
        mode,
        lengths,
    })
}

/// Inverse of [`dwt_decompose`].
pub fn idwt_reconstruct(
    d: &DwtDecomposition,
    filter: &WaveletFilter,
) -> Result<Vec<f64>, WaveletError> {
    let levels = d.levels();
    if levels == 0 || d.lengths.len() != levels + 1 {
        return Err(WaveletError::Inconsistent(format!(
            "{} detail series but {} recorded lengths",
            levels,
            d.lengths.len()
        )));
    }
    for level in 0..levels {
        let expected = coeff_len(d.lengths[level], filter.len(), d.mode);
        if d.details[level].len() != expected || d.lengths[level + 1] != expected {
            return Err(WaveletError::Inconsistent(format!(
                "level {} has {} detail coefficients, expected {}",
                level + 1,
                d.details[level].len(),
                expected
            )));
        }
    }
    if d.approx.len() != d.lengths[levels] {
        return Err(WaveletError::Inconsistent(format!(
            "approximation has {} coefficients, expected {}",
            d.approx.len(),
            d.lengths[levels]
        )));
    }
    let mut current = d.approx.clone();
    for level in (0..levels).rev() {
        current = synthesize(
            &current,
            &d.details[level],
            filter,
            d.mode,
            d.lengths[level],
        );
    }
    Ok(current)
}

/// EEG rhythm carried by one detail level at 128 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubBand {
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl SubBand {
    /// Feature order.
    pub const ALL: [SubBand; 4] = [SubBand::Theta, SubBand::Alpha, SubBand::Beta, SubBand::Gamma];

    /// Detail level holding this band at 128 Hz.
    pub fn level(self) -> usize {
        match self {
            SubBand::Theta => 4,
            SubBand::Alpha => 3,
            SubBand::Beta => 2,
            SubBand::Gamma => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SubBand::Theta => "theta",
            SubBand::Alpha => "alpha",
            SubBand::Beta => "beta",
            SubBand::Gamma => "gamma",
        }
    }
}

impl fmt::Display for SubBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SubBand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubBand::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown band `{s}`"))
    }
}

/// Maps a detail level to its rhythm and nominal `(lo, hi)` edges in Hz.
pub fn band_of_level(level: usize, rate_hz: f64) -> Result<(SubBand, f64, f64), WaveletError> {
    if rate_hz != 128.0 || !(1..=4).contains(&level) {
        return Err(WaveletError::NoBand { level, rate_hz });
    }
    let hi = rate_hz / 2.0 / (1u32 << (level - 1)) as f64;
    let band = SubBand::ALL
        .into_iter()
        .find(|b| b.level() == level)
        .expect("levels 1..=4 are all mapped");
    Ok((band, hi / 2.0, hi))
}

fn check_finite(coeffs: &[f64]) -> Result<(), WaveletError> {
    match coeffs.iter().position(|c| !c.is_finite()) {
        Some(i) => Err(WaveletError::NonFinite(i)),
        None => Ok(()),
    }
}

/// `-Σ c² ln c²`, with `0 · ln 0 = 0`.
pub fn wavelet_entropy(coeffs: &[f64]) -> Result<f64, WaveletError> {
    check_finite(coeffs)?;
    Ok(-coeffs
        .iter()
        .map(|c| c * c)
        .filter(|sq| *sq > 0.0)
        .map(|sq| sq * sq.ln())
        .sum::<f64>())
}

/// `Σ c²`.
pub fn wavelet_energy(coeffs: &[f64]) -> Result<f64, WaveletError> {
    check_finite(coeffs)?;
    Ok(coeffs.iter().map(|c| c * c).sum())
}
