//! CART regression trees (greedy variance reduction) and random forests.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::stream_rng;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Minimum number of training samples in each leaf.
    pub min_leaf: usize,
    /// Features examined per split. When it covers every feature they are
    /// scanned in index order without touching the random stream.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat node arena; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: TreeParams,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Builder<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        if self.params.max_features >= d {
            return (0..d).collect();
        }
        let rng = self.rng.as_mut().expect("feature subsampling needs a random stream");
        let mut f = sample(rng, d, self.params.max_features).into_vec();
        f.sort_unstable();
        f
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || n < 2 * self.params.min_leaf {
            return self.leaf(&idx);
        }
        let Some(best) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.build(best.left, depth + 1);
        let right = self.build(best.right, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    /// Maximises `S_L²/n_L + S_R²/n_R`, which is equivalent to minimising the
    /// children's summed squared error. The first strictly better candidate
    /// in (feature, position) order wins ties.
    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let sum_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let tol = 1e-12 * (sum_sq - parent).abs().max(f64::MIN_POSITIVE);

        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for feature in self.candidate_features() {
            let col = self.x.column(feature);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for pos in 1..n {
                left_sum += self.y[order[pos - 1]];
                if pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let (lo, hi) = (col[order[pos - 1]], col[order[pos]]);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / pos as f64 + right_sum * right_sum / (n - pos) as f64;
                if score - parent > tol && best.is_none_or(|(_, _, s)| score > s) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((feature, threshold, score));
                }
            }
        }
        let (feature, threshold, score) = best?;
        let col = self.x.column(feature);
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= threshold);
        Some(BestSplit {
            feature,
            threshold,
            score,
            left,
            right,
        })
        .filter(|b| b.score.is_finite())
    }
}

impl Tree {
    /// Fits on every row of `x`.
    pub fn fit(x: &Matrix, y: &[f64], params: &TreeParams, rng: Option<ChaCha8Rng>) -> Self {
        Self::fit_rows(x, y, (0..x.nrows()).collect(), params, rng)
    }

    fn fit_rows(x: &Matrix, y: &[f64], rows: Vec<usize>, params: &TreeParams, rng: Option<ChaCha8Rng>) -> Self {
        let mut b = Builder {
            x,
            y,
            params: *params,
            rng,
            nodes: Vec::new(),
        };
        b.build(rows, 0);
        Tree { nodes: b.nodes }
    }

    pub fn predict_one(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|r| self.predict_one(|f| x[(r, f)])).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

/// Tree `t` draws its bootstrap sample and split features from stream `t`
/// of `seed`, so the forest is identical for any thread count.
pub(super) fn fit_forest(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    bootstrap: bool,
    params: &TreeParams,
    seed: u64,
) -> Vec<Tree> {
    let n = x.nrows();
    (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let rows: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit_rows(x, y, rows, params, Some(rng))
        })
        .collect()
}

pub(super) fn forest_predict(trees: &[Tree], x: &Matrix) -> Vec<f64> {
    (0..x.nrows())
        .map(|r| trees.iter().map(|t| t.predict_one(|f| x[(r, f)])).sum::<f64>() / trees.len() as f64)
        .collect()
}
