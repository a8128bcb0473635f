use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict, train_smo, Gamma, RbfParams, SmoConfig, SvmError};
use crate::evaluation::{accuracy, stratified_kfold};
use crate::signal::BinaryLabel;

/// Cartesian product of candidate C and gamma values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    #[serde(rename = "C")]
    pub cs: Vec<f64>,
    pub gammas: Vec<Gamma>,
}

impl Default for ParamGrid {
    /// C ∈ {1, 50, 100, 200, 300}, g ∈ {1e-5, 1e-3, 1, 50, 100}.
    fn default() -> Self {
        Self {
            cs: vec![1.0, 50.0, 100.0, 200.0, 300.0],
            gammas: [0.00001, 0.001, 1.0, 50.0, 100.0]
                .into_iter()
                .map(Gamma::Value)
                .collect(),
        }
    }
}

impl ParamGrid {
    pub fn cells(&self) -> Vec<RbfParams> {
        self.cs
            .iter()
            .flat_map(|&c| self.gammas.iter().map(move |&gamma| RbfParams { c, gamma }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub params: RbfParams,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best: RbfParams,
    pub table: Vec<GridCell>,
}

/// Index of the highest mean accuracy; ties go to the smaller C, then the
/// smaller gamma.
pub fn select_best(table: &[GridCell]) -> Option<usize> {
    (0..table.len()).reduce(|best, i| {
        let (a, b) = (&table[i], &table[best]);
        let better = a.mean_accuracy > b.mean_accuracy
            || (a.mean_accuracy == b.mean_accuracy
                && (a.params.c, a.params.gamma.sort_key()) < (b.params.c, b.params.gamma.sort_key()));
        if better { i } else { best }
    })
}

/// Exhaustive stratified k-fold search over `grid`.
pub fn grid_search(
    x: ArrayView2<'_, f64>,
    y: &[BinaryLabel],
    grid: &ParamGrid,
    k: usize,
    seed: u64,
    config: &SmoConfig,
) -> Result<GridSearchResult, SvmError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(SvmError::InvalidParam("empty hyperparameter grid".into()));
    }
    let plan = stratified_kfold(y, k, seed).map_err(Box::new)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|f| plan.split(f)).collect();

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (train, test) = &folds[f];
            let xt = x.select(Axis(0), train);
            let yt: Vec<_> = train.iter().map(|&i| y[i]).collect();
            let model = train_smo(xt.view(), &yt, cells[c], config)?;
            let mut pred = Vec::with_capacity(test.len());
            let mut truth = Vec::with_capacity(test.len());
            for &i in test {
                let row = x.row(i).to_vec();
                pred.push(predict(&model, &row)?.label);
                truth.push(y[i]);
            }
            accuracy(&pred, &truth).map_err(|e| SvmError::Eval(Box::new(e)))
        })
        .collect::<Result<Vec<f64>, SvmError>>()?;

    let table: Vec<GridCell> = cells
        .iter()
        .enumerate()
        .map(|(c, params)| {
            let fold_accuracy = scores[c * k..(c + 1) * k].to_vec();
            let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
            GridCell {
                params: *params,
                fold_accuracy,
                mean_accuracy,
            }
        })
        .collect();
    let best = table[select_best(&table).expect("non-empty")].params;
    Ok(GridSearchResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn cell(c: f64, g: f64, acc: f64) -> GridCell {
        GridCell {
            params: RbfParams { c, gamma: Gamma::Value(g) },
            fold_accuracy: vec![acc],
            mean_accuracy: acc,
        }
    }

    #[test]
    fn default_grid_has_25_cells() {
        let g = ParamGrid::default();
        assert_eq!(g.cells().len(), 25);
        assert_eq!(g.cs, vec![1.0, 50.0, 100.0, 200.0, 300.0]);
    }

    #[test]
    fn ties_prefer_smaller_c_then_gamma() {
        let t = vec![cell(100.0, 1.0, 0.9), cell(50.0, 50.0, 0.9), cell(50.0, 1.0, 0.9), cell(1.0, 1.0, 0.8)];
        assert_eq!(select_best(&t), Some(2));
        assert_eq!(select_best(&[]), None);
    }

    proptest! {
        #[test]
        fn argmax_survives_constant_shift(
            accs in proptest::collection::vec(0u32..=256, 1..25),
            shift in -64i32..=64,
        ) {
            let grid = ParamGrid::default().cells();
            let table: Vec<_> = accs.iter().zip(&grid).map(|(a, p)| GridCell {
                params: *p,
                fold_accuracy: vec![],
                mean_accuracy: *a as f64 / 256.0,
            }).collect();
            let shifted: Vec<_> = table.iter().map(|c| GridCell {
                mean_accuracy: c.mean_accuracy + shift as f64 / 256.0,
                ..c.clone()
            }).collect();
            prop_assert_eq!(select_best(&table), select_best(&shifted));
        }
    }

    fn clusters() -> (Array2<f64>, Vec<BinaryLabel>) {
        let n = 36;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| {
            let centre = if i % 2 == 0 { 2.0 } else { -2.0 };
            centre + 0.3 * (((i * 13 + j * 7) % 10) as f64 / 10.0 - 0.5)
        });
        let y = (0..n).map(|i| if i % 2 == 0 { BinaryLabel::High } else { BinaryLabel::Low }).collect();
        (x, y)
    }

    #[test]
    fn singleton_grid() {
        let (x, y) = clusters();
        let grid = ParamGrid { cs: vec![50.0], gammas: vec![Gamma::Value(0.001)] };
        let r = grid_search(x.view(), &y, &grid, 6, 3, &SmoConfig::default()).unwrap();
        assert_eq!(r.best, RbfParams { c: 50.0, gamma: Gamma::Value(0.001) });
        assert_eq!(r.table.len(), 1);
        assert_eq!(r.table[0].fold_accuracy.len(), 6);
    }

    #[test]
    fn separable_data_best_cell_attains_table_max() {
        let (x, y) = clusters();
        let r = grid_search(x.view(), &y, &ParamGrid::default(), 6, 11, &SmoConfig::default()).unwrap();
        let max = r.table.iter().map(|c| c.mean_accuracy).fold(f64::MIN, f64::max);
        let best = r.table.iter().find(|c| c.params == r.best).unwrap();
        assert_eq!(best.mean_accuracy, max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let (x, y) = clusters();
        let grid = ParamGrid { cs: vec![], gammas: vec![Gamma::Scale] };
        assert!(grid_search(x.view(), &y, &grid, 2, 0, &SmoConfig::default()).is_err());
    }
}
