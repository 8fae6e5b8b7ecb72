use serde::{Deserialize, Serialize};

use super::{Design, Tree, TreeParams};

/// Stagewise least-squares boosting: each round fits a depth-limited tree
/// to the current residuals and adds it scaled by the shrinkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after 0, 1, ..., rounds stages.
    pub train_mse: Vec<f64>,
}

impl Boosted {
    pub fn fit(x: &Design, y: &[f64], rounds: usize, shrinkage: f64, params: &TreeParams) -> Boosted {
        let n = y.len();
        let rows: Vec<usize> = (0..n).collect();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut fitted = vec![init; n];
        let mse = |f: &[f64]| y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
        let mut train_mse = vec![mse(&fitted)];
        let mut trees = Vec::with_capacity(rounds);
        let row_cache: Vec<Vec<f64>> = (0..n).map(|i| x.row(i)).collect();
        for _ in 0..rounds {
            let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            let tree = Tree::fit_targets(x, residuals, &rows, params, None);
            for (f, row) in fitted.iter_mut().zip(&row_cache) {
                *f += shrinkage * tree.predict_row(row);
            }
            train_mse.push(mse(&fitted));
            trees.push(tree);
        }
        Boosted {
            init,
            shrinkage,
            trees,
            train_mse,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_staged(row, self.trees.len())
    }

    /// Prediction using only the first `rounds` trees.
    pub fn predict_staged(&self, row: &[f64], rounds: usize) -> f64 {
        self.init
            + self.shrinkage
                * self.trees[..rounds.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict_row(row))
                    .sum::<f64>()
    }

    /// Training SSE reduction per feature. A split that removes `g` from the
    /// residual SSE lowers the training SSE by `(2v - v^2) g` once scaled by
    /// shrinkage `v`, so the values add up to the total training SSE drop.
    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let scale = 2.0 * self.shrinkage - self.shrinkage * self.shrinkage;
        let mut imp = vec![0.0; n_features];
        for t in &self.trees {
            for (a, b) in imp.iter_mut().zip(t.importance(n_features)) {
                *a += scale * b;
            }
        }
        imp
    }
}
