//! Sequential minimal optimization for the C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α_i ≤ C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Working pairs are chosen by maximal violation for the first index and
//! second-order gain for the second. The search stops once the maximal KKT
//! violation `m(α) − M(α)` drops below `tol`. Kernel rows are either
//! precomputed in full or computed on demand behind a bounded row cache.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;

use super::{gamma_scale, Gamma, RbfParams, SvmError, TrainedSvm};
use crate::features::Standardizer;
use crate::signal::BinaryLabel;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    /// KKT violation tolerance.
    pub tol: f64,
    /// Iteration budget in units of `n` pair updates; `None` means `10·n`.
    pub max_passes: Option<usize>,
    /// Fit per-feature z-scoring on the training rows before solving.
    pub standardize: bool,
    /// Kernel cache budget in MiB.
    pub cache_mb: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_passes: None,
            standardize: true,
            cache_mb: 512,
        }
    }
}

/// Solver-side details that are not part of the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    /// Dual variables for every training row, in input order.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// Final `m(α) − M(α)`.
    pub gap: f64,
    pub free: usize,
}

fn sign(label: BinaryLabel) -> f64 {
    match label {
        BinaryLabel::High => 1.0,
        BinaryLabel::Low => -1.0,
    }
}

struct KernelRows<'a> {
    x: ArrayView2<'a, f64>,
    norms: Vec<f64>,
    gamma: f64,
    dense: Option<Vec<Arc<Vec<f64>>>>,
    cache: HashMap<usize, Arc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: ArrayView2<'a, f64>, gamma: f64, cache_mb: usize) -> Self {
        let n = x.nrows();
        let norms = x.rows().into_iter().map(|r| r.dot(&r)).collect();
        let row_bytes = n * std::mem::size_of::<f64>();
        let budget = cache_mb.max(1) * 1024 * 1024;
        let mut rows = Self {
            x,
            norms,
            gamma,
            dense: None,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (budget / row_bytes.max(1)).max(2),
        };
        if rows.capacity >= n {
            let full = (0..n)
                .into_par_iter()
                .map(|i| Arc::new((0..n).map(|t| rows.entry(i, t)).collect()))
                .collect();
            rows.dense = Some(full);
        }
        rows
    }

    #[inline]
    fn entry(&self, i: usize, t: usize) -> f64 {
        if i == t {
            return 1.0;
        }
        let dot = self.x.row(i).dot(&self.x.row(t));
        let d2 = (self.norms[i] + self.norms[t] - 2.0 * dot).max(0.0);
        (-self.gamma * d2).exp()
    }

    fn row(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(full) = &self.dense {
            return Arc::clone(&full[i]);
        }
        if let Some(r) = self.cache.get(&i) {
            return Arc::clone(r);
        }
        let n = self.x.nrows();
        let computed: Vec<f64> = (0..n).into_par_iter().map(|t| self.entry(i, t)).collect();
        let r = Arc::new(computed);
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.order.push_back(i);
        self.cache.insert(i, Arc::clone(&r));
        r
    }
}

fn validate(x: ArrayView2<'_, f64>, y: &[BinaryLabel]) -> Result<(), SvmError> {
    if x.nrows() == 0 {
        return Err(SvmError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(SvmError::LabelCount {
            samples: x.nrows(),
            labels: y.len(),
        });
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(SvmError::NonFinite { row, col });
    }
    let first = y[0];
    if y.iter().all(|l| *l == first) {
        return Err(SvmError::SingleClass(first));
    }
    Ok(())
}

/// Trains a soft-margin RBF classifier on rows of `x`.
pub fn train_smo(
    x: ArrayView2<'_, f64>,
    y: &[BinaryLabel],
    params: RbfParams,
    config: &SmoConfig,
) -> Result<TrainedSvm, SvmError> {
    train_smo_with_report(x, y, params, config).map(|(m, _)| m)
}

pub fn train_smo_with_report(
    x: ArrayView2<'_, f64>,
    y: &[BinaryLabel],
    params: RbfParams,
    config: &SmoConfig,
) -> Result<(TrainedSvm, SolverReport), SvmError> {
    params.validate()?;
    validate(x, y)?;
    let standardizer = if config.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(x.ncols())
    };
    let z = standardizer.transform(x);
    let gamma = match params.gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => gamma_scale(z.view())?,
    };
    let ys: Vec<f64> = y.iter().map(|l| sign(*l)).collect();
    let (report, grad) = solve(z.view(), &ys, params.c, gamma, config)?;

    let sv: Vec<usize> = (0..ys.len()).filter(|&i| report.alpha[i] > 0.0).collect();
    let support_vectors = z.select(Axis(0), &sv);
    let dual_coeffs = sv.iter().map(|&i| report.alpha[i] * ys[i]).collect();
    let bias = bias_from(&report.alpha, &grad, &ys, params.c);
    Ok((
        TrainedSvm {
            support_vectors,
            dual_coeffs,
            bias,
            c: params.c,
            gamma_spec: params.gamma,
            gamma,
            standardizer,
        },
        report,
    ))
}

/// `b = -ρ`, with ρ averaged over free vectors or, when none are free, the
/// midpoint of the interval the bound vectors allow.
fn bias_from(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..ys.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    -rho
}

fn solve(
    z: ArrayView2<'_, f64>,
    ys: &[f64],
    c: f64,
    gamma: f64,
    config: &SmoConfig,
) -> Result<(SolverReport, Vec<f64>), SvmError> {
    let n = ys.len();
    let max_iter = config.max_passes.unwrap_or(10 * n).saturating_mul(n).max(1);
    let mut kernel = KernelRows::new(z, gamma, config.cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_up = |a: f64, y: f64| if y > 0.0 { a < c } else { a > 0.0 };
    let is_low = |a: f64, y: f64| if y > 0.0 { a > 0.0 } else { a < c };

    let mut iterations = 0;
    let gap = loop {
        // First index: maximal violator among I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], ys[t]) && -ys[t] * grad[t] >= gmax {
                gmax = -ys[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break 0.0;
        }
        let row_i = kernel.row(i);

        // Second index: best second-order gain among I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !is_low(alpha[t], ys[t]) {
                continue;
            }
            let v = -ys[t] * grad[t];
            gmax2 = gmax2.max(-v);
            let diff = gmax - v;
            if diff > 0.0 {
                // K_ii = K_tt = 1 for the RBF kernel.
                let quad = (2.0 - 2.0 * row_i[t]).max(TAU);
                let obj = -diff * diff / quad;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < config.tol || j == usize::MAX {
            break gap;
        }
        if iterations >= max_iter {
            let free = alpha.iter().filter(|a| **a > 0.0 && **a < c).count();
            return Err(SvmError::NotConverged {
                iterations,
                gap,
                tol: config.tol,
                free,
            });
        }
        iterations += 1;

        let row_j = kernel.row(j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (yi, yj) = (ys[i], ys[j]);
        // K_ii + K_jj - 2 K_ij; the labels cancel for either sign pairing.
        let quad = (2.0 - 2.0 * row_i[j]).max(TAU);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = old_i - old_j;
            let mut ai = old_i + delta;
            let mut aj = old_j + delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            let mut ai = old_i - delta;
            let mut aj = old_j + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        }

        let di = (alpha[i] - old_i) * yi;
        let dj = (alpha[j] - old_j) * yj;
        for t in 0..n {
            // Q_ti Δα_i = y_t y_i K_ti Δα_i
            grad[t] += ys[t] * (row_i[t] * di + row_j[t] * dj);
        }
    };

    let free = alpha.iter().filter(|a| **a > 0.0 && **a < c).count();
    Ok((
        SolverReport {
            alpha,
            iterations,
            gap,
            free,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::predict;
    use ndarray::{array, Array2};
    use BinaryLabel::{High, Low};

    fn no_scaling() -> SmoConfig {
        SmoConfig {
            tol: 1e-10,
            standardize: false,
            ..SmoConfig::default()
        }
    }

    #[test]
    fn separates_xor() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [Low, Low, High, High];
        let params = RbfParams { c: 1.0, gamma: Gamma::Value(1.0) };
        let model = train_smo(x.view(), &y, params, &no_scaling()).unwrap();
        for (row, label) in x.rows().into_iter().zip(y) {
            assert_eq!(predict(&model, row.as_slice().unwrap()).unwrap().label, label);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        let err = train_smo(x.view(), &[High, High], RbfParams::default(), &no_scaling());
        assert!(matches!(err, Err(SvmError::SingleClass(High))));
    }

    #[test]
    fn label_count_and_finiteness() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            train_smo(x.view(), &[High], RbfParams::default(), &no_scaling()),
            Err(SvmError::LabelCount { samples: 2, labels: 1 })
        ));
        let bad = array![[0.0], [f64::NAN]];
        assert!(matches!(
            train_smo(bad.view(), &[High, Low], RbfParams::default(), &no_scaling()),
            Err(SvmError::NonFinite { row: 1, col: 0 })
        ));
        let params = RbfParams { c: -1.0, gamma: Gamma::Scale };
        assert!(matches!(
            train_smo(x.view(), &[High, Low], params, &no_scaling()),
            Err(SvmError::InvalidParam(_))
        ));
    }

    #[test]
    fn support_vectors_classify_as_their_labels() {
        // Two well-separated clusters; large C approximates a hard margin.
        let x = array![
            [0.0, 0.1], [0.2, -0.1], [-0.1, 0.0], [0.1, 0.2],
            [3.0, 3.1], [3.2, 2.9], [2.9, 3.0], [3.1, 3.2]
        ];
        let y = [Low, Low, Low, Low, High, High, High, High];
        let params = RbfParams { c: 1e3, gamma: Gamma::Value(0.5) };
        let (model, report) = train_smo_with_report(x.view(), &y, params, &no_scaling()).unwrap();
        assert!(model.n_support() >= 2);
        for (i, a) in report.alpha.iter().enumerate() {
            if *a > 0.0 {
                let p = predict(&model, x.row(i).as_slice().unwrap()).unwrap();
                assert_eq!(p.label, y[i]);
            }
        }
    }

    #[test]
    fn budget_exhaustion_reports_diagnostics() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [0.2, 0.7]];
        let y = [Low, Low, High, High, Low, High];
        let cfg = SmoConfig { tol: 1e-15, max_passes: Some(0), standardize: false, cache_mb: 1 };
        let err = train_smo(x.view(), &y, RbfParams { c: 10.0, gamma: Gamma::Value(2.0) }, &cfg)
            .unwrap_err();
        match err {
            SvmError::NotConverged { iterations, gap, .. } => {
                assert_eq!(iterations, 1);
                assert!(gap > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cached_rows_match_dense() {
        // 600 rows with a 1 MiB budget forces on-demand rows.
        let x = Array2::from_shape_fn((600, 3), |(i, j)| ((i * 37 + j * 11) % 101) as f64 / 50.0);
        let y: Vec<_> = (0..600)
            .map(|i| if (x[[i, 0]] + x[[i, 1]]) > 2.0 { High } else { Low })
            .collect();
        let params = RbfParams { c: 10.0, gamma: Gamma::Value(1.0) };
        let dense = SmoConfig { tol: 1e-6, standardize: false, ..SmoConfig::default() };
        let small = SmoConfig { cache_mb: 1, ..dense };
        let a = train_smo(x.view(), &y, params, &dense).unwrap();
        let b = train_smo(x.view(), &y, params, &small).unwrap();
        for i in (0..600).step_by(7) {
            let row = x.row(i);
            let da = a.decision_value(row.as_slice().unwrap()).unwrap();
            let db = b.decision_value(row.as_slice().unwrap()).unwrap();
            assert!((da - db).abs() < 1e-9);
        }
    }
}
