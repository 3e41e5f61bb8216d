use serde::{Deserialize, Serialize};

use super::sq_dist;
use crate::Matrix;

/// Brute-force Euclidean k-nearest-neighbour regressor (uniform weights).
/// Distance ties resolve to the lower training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl KnnParams {
    pub(super) fn fit(x: &Matrix, y: &[f64], k: usize) -> Self {
        Self {
            k,
            x: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            y: y.to_vec(),
        }
    }

    pub(super) fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter()
            .map(|q| {
                let mut d: Vec<(f64, usize)> = self
                    .x
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (sq_dist(q.iter().copied(), p.iter().copied()), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..self.k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64
            })
            .collect()
    }
}
