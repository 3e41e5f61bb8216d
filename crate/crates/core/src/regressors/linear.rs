use nalgebra::{DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::Matrix;

/// Ordinary least squares with a small ridge term, intercept unpenalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearParams {
    /// Solves `min |Xc w - yc|² + ridge |w|²` on centred data through the
    /// thin SVD `Xc = U S Vᵀ`: `w = V diag(s / (s² + ridge)) Uᵀ yc`.
    pub(super) fn fit(x: &Matrix, y: &[f64], ridge: f64) -> Self {
        let n = x.nrows() as f64;
        let x_mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
        let y_mean = y.iter().sum::<f64>() / n;
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_mean[j]);
        }
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));

        let svd = SVD::new(xc, true, true);
        let u = svd.u.expect("U requested");
        let v_t = svd.v_t.expect("Vᵀ requested");
        let uty = u.transpose() * yc;
        let scaled = DVector::from_iterator(
            svd.singular_values.len(),
            svd.singular_values.iter().zip(uty.iter()).map(|(&s, &c)| {
                let denom = s * s + ridge;
                if denom > 0.0 {
                    s / denom * c
                } else {
                    0.0
                }
            }),
        );
        let w = v_t.transpose() * scaled;
        let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
        Self {
            intercept,
            weights: w.iter().copied().collect(),
        }
    }

    pub(super) fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter()
            .map(|r| self.intercept + r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}
