//! Regression trees grown greedily on squared error, with minimal
//! cost-complexity pruning.

use serde::{Deserialize, Serialize};

use super::Design;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Complexity parameter; a subtree survives only if it lowers training
    /// SSE by more than `cp * root SSE` per extra leaf.
    pub cp: f64,
    /// Features tried per split; `None` means all.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
        n: usize,
        sse: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// SSE reduction achieved by this split.
        gain: f64,
        value: f64,
        n: usize,
        sse: f64,
    },
}

impl Node {
    fn stats(&self) -> (f64, usize, f64) {
        match *self {
            Node::Leaf { value, n, sse } | Node::Split { value, n, sse, .. } => (value, n, sse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a Design,
    /// Target per sample position.
    y: Vec<f64>,
    /// Design row per sample position (may repeat under bootstrap).
    rows: Vec<usize>,
    /// Per feature, sample positions sorted by feature value; every node
    /// owns the same `lo..hi` segment in each of these.
    order: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    is_left: Vec<bool>,
    params: &'a TreeParams,
    rng: Option<&'a mut Rng>,
    nodes: Vec<Node>,
}

fn mean_sse(values: impl Iterator<Item = f64> + Clone) -> (f64, usize, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return (0.0, 0, 0.0);
    }
    let mean = sum / n as f64;
    let sse = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, n, sse)
}

impl<'a> Builder<'a> {
    fn value(&self, feature: usize, pos: u32) -> f64 {
        self.x.value(self.rows[pos as usize], feature)
    }

    fn segment_stats(&self, lo: usize, hi: usize) -> (f64, usize, f64) {
        mean_sse(self.order[0][lo..hi].iter().map(|&p| self.y[p as usize]))
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.x.n_cols();
        match (self.params.mtry, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < k => {
                let mut pool: Vec<usize> = (0..k).collect();
                for i in 0..m {
                    let j = i + rng::below(rng, k - i);
                    pool.swap(i, j);
                }
                pool.truncate(m);
                pool.sort_unstable();
                pool
            }
            _ => (0..k).collect(),
        }
    }

    /// Best (feature, threshold, split position) for the segment.
    fn best_split(&mut self, lo: usize, hi: usize) -> Option<(usize, f64, f64)> {
        let n = hi - lo;
        let min_leaf = self.params.min_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = self.order[0][lo..hi].iter().map(|&p| self.y[p as usize]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for f in self.candidate_features() {
            let seg = &self.order[f][lo..hi];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                let p = seg[i];
                left_sum += self.y[p as usize];
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let v = self.value(f, p);
                let v_next = self.value(f, seg[i + 1]);
                if !(v < v_next) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    let mut threshold = 0.5 * (v + v_next);
                    if !(threshold < v_next) {
                        threshold = v;
                    }
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let (value, n, sse) = self.segment_stats(lo, hi);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value, n, sse });
        if depth >= self.params.max_depth || sse <= 1e-300 {
            return id;
        }
        let Some((feature, threshold, approx_gain)) = self.best_split(lo, hi) else {
            return id;
        };
        if !(approx_gain > 1e-12 * sse) {
            return id;
        }
        // stable partition of every feature's segment
        for &p in &self.order[feature][lo..hi] {
            self.is_left[p as usize] = self.value(feature, p) <= threshold;
        }
        let n_left = self.order[feature][lo..hi]
            .iter()
            .filter(|&&p| self.is_left[p as usize])
            .count();
        for f in 0..self.order.len() {
            self.scratch.clear();
            let seg = &self.order[f][lo..hi];
            self.scratch.extend(seg.iter().filter(|&&p| self.is_left[p as usize]));
            self.scratch.extend(seg.iter().filter(|&&p| !self.is_left[p as usize]));
            self.order[f][lo..hi].copy_from_slice(&self.scratch);
        }
        let mid = lo + n_left;
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        let (_, _, sse_l) = self.nodes[left].stats();
        let (_, _, sse_r) = self.nodes[right].stats();
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            gain: (sse - sse_l - sse_r).max(0.0),
            value,
            n,
            sse,
        };
        id
    }
}

impl Tree {
    /// Grow on the samples `rows` (indices into `x`, repeats allowed).
    pub fn fit(x: &Design, y: &[f64], rows: &[usize], params: &TreeParams, rng: Option<&mut Rng>) -> Tree {
        Self::fit_targets(x, rows.iter().map(|&r| y[r]).collect(), rows, params, rng)
    }

    /// Grow with an explicit target per sample position.
    pub(crate) fn fit_targets(
        x: &Design,
        y: Vec<f64>,
        rows: &[usize],
        params: &TreeParams,
        rng: Option<&mut Rng>,
    ) -> Tree {
        let n = rows.len();
        let order = (0..x.n_cols().max(1))
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                if f < x.n_cols() {
                    let col = x.column(f);
                    idx.sort_by(|&a, &b| {
                        col[rows[a as usize]]
                            .total_cmp(&col[rows[b as usize]])
                            .then(a.cmp(&b))
                    });
                }
                idx
            })
            .collect();
        let mut b = Builder {
            x,
            y,
            rows: rows.to_vec(),
            order,
            scratch: Vec::with_capacity(n),
            is_left: vec![false; n],
            params,
            rng,
            nodes: Vec::new(),
        };
        if n > 0 {
            b.grow(0, n, 0);
        } else {
            b.nodes.push(Node::Leaf {
                value: 0.0,
                n: 0,
                sse: 0.0,
            });
        }
        let mut tree = Tree { nodes: b.nodes };
        if params.cp > 0.0 {
            let (_, _, root_sse) = tree.nodes[0].stats();
            tree.prune(params.cp * root_sse);
        }
        tree
    }

    /// Weakest-link pruning: collapse the internal node with the smallest
    /// per-leaf SSE improvement while that improvement is at most `alpha`.
    pub fn prune(&mut self, alpha: f64) {
        loop {
            let mut weakest: Option<(usize, f64)> = None;
            for id in 0..self.nodes.len() {
                if !self.reachable(id) {
                    continue;
                }
                if let Node::Split { sse, .. } = self.nodes[id] {
                    let (leaves, leaf_sse) = self.subtree_leaves(id);
                    let g = (sse - leaf_sse) / (leaves as f64 - 1.0);
                    if weakest.is_none_or(|(_, w)| g < w) {
                        weakest = Some((id, g));
                    }
                }
            }
            match weakest {
                Some((id, g)) if g <= alpha => {
                    let (value, n, sse) = self.nodes[id].stats();
                    self.nodes[id] = Node::Leaf { value, n, sse };
                }
                _ => break,
            }
        }
        self.compact();
    }

    fn reachable(&self, target: usize) -> bool {
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            if id == target {
                return true;
            }
            if let Node::Split { left, right, .. } = self.nodes[id] {
                stack.push(left);
                stack.push(right);
            }
        }
        false
    }

    fn subtree_leaves(&self, id: usize) -> (usize, f64) {
        match self.nodes[id] {
            Node::Leaf { sse, .. } => (1, sse),
            Node::Split { left, right, .. } => {
                let (a, sa) = self.subtree_leaves(left);
                let (b, sb) = self.subtree_leaves(right);
                (a + b, sa + sb)
            }
        }
    }

    fn compact(&mut self) {
        fn copy(src: &[Node], id: usize, out: &mut Vec<Node>) -> usize {
            let new_id = out.len();
            out.push(src[id].clone());
            if let Node::Split { left, right, .. } = src[id] {
                let l = copy(src, left, out);
                let r = copy(src, right, out);
                if let Node::Split { left, right, .. } = &mut out[new_id] {
                    *left = l;
                    *right = r;
                }
            }
            new_id
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        copy(&self.nodes, 0, &mut out);
        self.nodes = out;
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Total SSE reduction per feature.
    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_features];
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                imp[*feature] += gain;
            }
        }
        imp
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(t, left).max(d(t, right)),
            }
        }
        d(self, 0)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Indented text rendering of the tree.
    pub fn export_text(&self, names: &[String]) -> String {
        fn walk(t: &Tree, names: &[String], id: usize, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match &t.nodes[id] {
                Node::Leaf { value, n, .. } => {
                    out.push_str(&format!("{pad}leaf: value={value:.6} n={n}\n"));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    n,
                    ..
                } => {
                    let name = names.get(*feature).map_or("?", String::as_str);
                    out.push_str(&format!("{pad}{name} <= {threshold:.6} (n={n})\n"));
                    walk(t, names, *left, indent + 1, out);
                    out.push_str(&format!("{pad}{name} > {threshold:.6}\n"));
                    walk(t, names, *right, indent + 1, out);
                }
            }
        }
        let mut out = String::new();
        walk(self, names, 0, 0, &mut out);
        out
    }
}
