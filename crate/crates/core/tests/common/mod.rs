//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use emowave_core::datastore::{ClassEffect, SynthSpec};

/// Roots of a monic polynomial `x^n + c[n-1] x^(n-1) + ... + c[0]` by
/// Durand-Kerner iteration.
pub fn durand_kerner(c: &[f64]) -> Vec<Complex64> {
    let n = c.len();
    let eval = |x: Complex64| {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (0..n).rev() {
            acc = acc * x + c[k];
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..500 {
        let prev = roots.clone();
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
        let moved = roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if moved < 1e-16 {
            break;
        }
    }
    roots
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Daubechies lowpass with `p` vanishing moments (2p taps) from spectral
/// factorization of the half-band polynomial, minimum-phase root choice.
pub fn daubechies_spectral(p: usize) -> Vec<f64> {
    // P(y) = sum_k C(p-1+k, k) y^k, made monic.
    let coeffs: Vec<f64> = (0..p).map(|k| binomial((p - 1 + k) as u64, k as u64)).collect();
    let lead = coeffs[p - 1];
    let monic: Vec<f64> = coeffs[..p - 1].iter().map(|c| c / lead).collect();
    let y_roots = durand_kerner(&monic);

    // Each y_k gives z^2 - (2 - 4 y_k) z + 1 = 0; keep the root inside the unit circle.
    let mut zeros: Vec<Complex64> = vec![Complex64::new(-1.0, 0.0); p];
    for y in y_roots {
        let b = Complex64::new(2.0, 0.0) - 4.0 * y;
        let disc = (b * b - 4.0).sqrt();
        let r1 = (b + disc) / 2.0;
        let r2 = (b - disc) / 2.0;
        zeros.push(if r1.norm() < 1.0 { r1 } else { r2 });
    }
    // Expand prod (z - r); descending coefficients are h[0..].
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for r in zeros {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    let h: Vec<f64> = poly.iter().map(|c| c.re).collect();
    let s: f64 = h.iter().sum();
    h.iter().map(|v| v * std::f64::consts::SQRT_2 / s).collect()
}

/// Solution of the C-SVC dual found by enumerating every assignment of the
/// points to {at zero, free, at C} and solving the KKT system of each.
pub struct DualOracle {
    pub alpha: Vec<f64>,
    /// Feasible bias interval; a single point whenever a vector is free.
    pub bias: (f64, f64),
    pub objective: f64,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

pub fn dual_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> Option<DualOracle> {
    let n = x.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * rbf(&x[i], &x[j], gamma));
    let eps = 1e-9;
    let mut best: Option<DualOracle> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut v = code;
        for s in state.iter_mut() {
            *s = (v % 3) as u8;
            v /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut alpha = vec![0.0; n];
        for i in 0..n {
            if state[i] == 2 {
                alpha[i] = c;
            }
        }
        let mut b_interval = (f64::NEG_INFINITY, f64::INFINITY);
        if !free.is_empty() {
            // [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
            // [y_F'   0 ] [ b ] = [  -y_B' a_B ]
            let m = free.len();
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q[(i, j)];
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] == 2).map(|j| q[(i, j)] * c).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 2).map(|j| y[j] * c).sum::<f64>();
            let Some(sol) = a.lu().solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            if free.iter().enumerate().any(|(r, _)| sol[r] <= eps || sol[r] >= c - eps) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
            b_interval = (sol[m], sol[m]);
        } else if (0..n).map(|i| y[i] * alpha[i]).sum::<f64>().abs() > eps {
            continue;
        }
        // Bound points: gradient sign conditions give bias limits.
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[(i, j)] * alpha[j]).sum::<f64>() - 1.0)
            .collect();
        let mut ok = true;
        for i in 0..n {
            if state[i] == 1 {
                continue;
            }
            // grad_i + y_i b >= 0 at zero, <= 0 at C.
            let (lo, hi) = if state[i] == 0 {
                if y[i] > 0.0 { (-grad[i], f64::INFINITY) } else { (f64::NEG_INFINITY, grad[i]) }
            } else if y[i] > 0.0 {
                (f64::NEG_INFINITY, -grad[i])
            } else {
                (grad[i], f64::INFINITY)
            };
            b_interval.0 = b_interval.0.max(lo);
            b_interval.1 = b_interval.1.min(hi);
            if b_interval.0 > b_interval.1 + 1e-7 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let objective = 0.5
            * (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| alpha[i] * alpha[j] * q[(i, j)])
                .sum::<f64>()
            - alpha.iter().sum::<f64>();
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(DualOracle {
                alpha,
                bias: b_interval,
                objective,
            });
        }
    }
    best
}

/// Strong per-band effect: valence in alpha and gamma, arousal in theta and beta.
pub fn strong_spec(seed: u64, n_subjects: u32, n_trials: u32, channels: usize) -> SynthSpec {
    SynthSpec {
        noise_std: 1.0,
        class_effect: ClassEffect {
            valence: [0.0, 3.0, 0.0, 2.0],
            arousal: [3.0, 0.0, 2.0, 0.0],
        },
        ..SynthSpec::new(seed, n_subjects, n_trials, channels)
    }
}
