use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use super::sq_dist;
use crate::{Error, Matrix, Result};

/// Gaussian-process posterior mean with kernel
/// `k(x, x') = σ² exp(-|x - x'|² / (2ℓ²)) + noise·δ(x, x')`.
/// The prior mean is the training-target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Diagonal jitter that had to be added on top of the noise.
    pub jitter: f64,
    pub y_mean: f64,
    pub x: Vec<Vec<f64>>,
    /// `(K + noise I)^-1 (y - y_mean)`.
    pub alpha: Vec<f64>,
}

impl GpParams {
    fn kernel(&self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
        self.signal_variance * (-sq_dist(a, b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    pub(super) fn fit(
        x: &Matrix,
        y: &[f64],
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        let n = x.nrows();
        let mut params = Self {
            length_scale,
            signal_variance,
            noise_variance,
            jitter: 0.0,
            y_mean: y.iter().sum::<f64>() / n as f64,
            x: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            alpha: Vec::new(),
        };
        let gram = Matrix::from_fn(n, n, |i, j| {
            params.kernel(params.x[i].iter().copied(), params.x[j].iter().copied())
        });
        let rhs = DVector::from_iterator(n, y.iter().map(|v| v - params.y_mean));

        // Duplicate training rows make K singular when the noise is tiny.
        let mut jitter = 0.0;
        for attempt in 0..8 {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += noise_variance + jitter;
            }
            if let Some(chol) = Cholesky::new(k) {
                params.alpha = chol.solve(&rhs).iter().copied().collect();
                params.jitter = jitter;
                return Ok(params);
            }
            jitter = signal_variance * 1e-12 * 10f64.powi(attempt);
        }
        Err(Error::Degenerate("gp kernel matrix is not positive definite".into()))
    }

    pub(super) fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter()
            .map(|q| {
                self.y_mean
                    + self
                        .x
                        .iter()
                        .zip(&self.alpha)
                        .map(|(p, a)| a * self.kernel(q.iter().copied(), p.iter().copied()))
                        .sum::<f64>()
            })
            .collect()
    }
}
