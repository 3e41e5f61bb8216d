use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Low-dimensional linear projection of a record matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    /// `n × dims` coordinates of the fitted rows.
    pub coordinates: Matrix,
    pub method: String,
    /// Fraction of the total variance carried by each axis.
    pub explained_variance: Vec<f64>,
    /// Variance along each axis (denominator `n - 1`).
    pub eigenvalues: Vec<f64>,
    /// `d × dims`, orthonormal columns.
    pub components: Matrix,
    pub mean: Vec<f64>,
}

impl Projection2D {
    pub fn dims(&self) -> usize {
        self.components.ncols()
    }

    /// Projects new rows with the fitted mean and axes.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "projection input width",
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        Ok(center(x, &self.mean) * &self.components)
    }

    /// Maps the fitted coordinates back to feature space.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = &self.coordinates * self.components.transpose();
        for mut row in out.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

fn center(x: &Matrix, mean: &[f64]) -> Matrix {
    Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j])
}

/// Principal component projection onto the top `dims` axes. Each axis is
/// signed so its largest-magnitude loading is positive (first such loading
/// on ties). Uses the covariance eigenproblem when `d <= n`, the Gram matrix
/// otherwise.
pub fn pca_project(x: &Matrix, dims: usize) -> Result<Projection2D> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    if dims == 0 || dims > d {
        return Err(Error::KOutOfRange { k: dims, max: d });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let xc = center(x, &mean);
    let denom = (n - 1) as f64;

    let (mut values, mut axes): (Vec<f64>, Vec<DVector<f64>>) = if d <= n {
        let cov = xc.transpose() * &xc / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        (
            order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
            order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect(),
        )
    } else {
        let gram = &xc * xc.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut vals = Vec::new();
        let mut vecs = Vec::new();
        for &i in &order {
            let lambda = eig.eigenvalues[i];
            if lambda <= 1e-12 * top {
                break;
            }
            // v = Xcᵀ u / sqrt((n-1) λ)
            let v = xc.transpose() * eig.eigenvectors.column(i) / (denom * lambda).sqrt();
            vals.push(lambda);
            vecs.push(v);
        }
        (vals, vecs)
    };

    let total: f64 = values.iter().sum();
    if !(total > 0.0) || values[0] <= 1e-14 * (1.0 + mean.iter().map(|m| m * m).sum::<f64>()) {
        return Err(Error::RankZero);
    }

    // Gram path may produce fewer axes than asked for; complete the basis.
    let mut e = 0;
    while axes.len() < dims {
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        for a in &axes {
            let proj = a.dot(&v);
            v -= a * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            axes.push(v / norm);
            values.push(0.0);
        }
        e += 1;
    }

    let mut components = Matrix::zeros(d, dims);
    for (k, axis) in axes.iter().take(dims).enumerate() {
        let mut pivot = 0;
        for i in 1..d {
            if axis[i].abs() > axis[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if axis[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.set_column(k, &(axis * sign));
    }
    let coordinates = &xc * &components;
    let eigenvalues: Vec<f64> = values[..dims].to_vec();
    let explained_variance = eigenvalues.iter().map(|v| v / total).collect();
    Ok(Projection2D {
        coordinates,
        method: "pca".into(),
        explained_variance,
        eigenvalues,
        components,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn collinear_points() {
        let x = Matrix::from_fn(6, 2, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 + 1.0 });
        let p = pca_project(&x, 2).unwrap();
        assert!((p.explained_variance[0] - 1.0).abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
        // largest loading positive
        assert!(p.components[(1, 0)] > 0.0);
    }

    #[test]
    fn isotropic_cross() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let p = pca_project(&x, 2).unwrap();
        assert!((p.explained_variance[0] - p.explained_variance[1]).abs() < 1e-10);
    }

    #[test]
    fn full_reconstruction() {
        let mut rng = crate::seed::stream_rng(5, 0);
        let x = Matrix::from_fn(50, 10, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let p = pca_project(&x, 10).unwrap();
        assert!((p.reconstruct() - &x).amax() < 1e-8);
        let gram = p.components.transpose() * &p.components;
        assert!((gram - Matrix::identity(10, 10)).amax() < 1e-10);
        for k in 0..10 {
            let col = p.coordinates.column(k);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 49.0;
            assert!((var - p.eigenvalues[k]).abs() < 1e-8);
        }
        for w in p.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn wide_matrix_uses_gram() {
        let mut rng = crate::seed::stream_rng(6, 0);
        let x = Matrix::from_fn(5, 12, |_, _| rng.random::<f64>());
        let p = pca_project(&x, 2).unwrap();
        let q = pca_project(&x.clone(), 2).unwrap();
        assert_eq!(p, q);
        let gram = p.components.transpose() * &p.components;
        assert!((gram - Matrix::identity(2, 2)).amax() < 1e-10);
        // all 4 nonzero axes reconstruct exactly
        let full = pca_project(&x, 6).unwrap();
        assert!((full.reconstruct() - &x).amax() < 1e-8);
        // matches the covariance route on the transpose problem's eigenvalues
        let xc = center(&x, &p.mean);
        let cov = xc.transpose() * &xc / 4.0;
        let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!((ev[0] - p.eigenvalues[0]).abs() < 1e-10);
        assert!((ev[1] - p.eigenvalues[1]).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert!(matches!(pca_project(&Matrix::from_element(4, 3, 2.0), 2), Err(Error::RankZero)));
        assert!(pca_project(&Matrix::zeros(1, 3), 2).is_err());
        assert!(pca_project(&Matrix::from_fn(4, 2, |i, j| (i + j) as f64), 3).is_err());
    }
}
