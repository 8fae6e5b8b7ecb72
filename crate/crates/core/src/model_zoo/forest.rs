use serde::{Deserialize, Serialize};

use super::{Design, Tree, TreeParams};
use crate::par;
use crate::rng;

/// Bagged regression trees with per-split feature subsampling. Tree `i`
/// draws its bootstrap sample and feature subsets from its own ChaCha8
/// stream derived from `(seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Per-tree in-bag SSE reduction per feature.
    tree_importance: Vec<Vec<f64>>,
}

impl Forest {
    pub fn fit(x: &Design, y: &[f64], ntree: usize, bootstrap: bool, params: &TreeParams, seed: u64) -> Forest {
        let n = y.len();
        let grown: Vec<(Tree, Vec<f64>)> = par::map_range(ntree, |i| {
            let mut rng = rng::rng_from(seed, &[i as u64]);
            let rows: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng::below(&mut rng, n)).collect()
            } else {
                (0..n).collect()
            };
            let t = Tree::fit(x, y, &rows, params, Some(&mut rng));
            let imp = t.importance(x.n_cols());
            (t, imp)
        });
        let (trees, tree_importance) = grown.into_iter().unzip();
        Forest {
            trees,
            tree_importance,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    /// Mean over trees of each tree's SSE reduction per feature.
    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_features];
        for t in &self.tree_importance {
            for (a, b) in imp.iter_mut().zip(t) {
                *a += b;
            }
        }
        let k = self.trees.len().max(1) as f64;
        imp.iter_mut().for_each(|v| *v /= k);
        imp
    }
}
