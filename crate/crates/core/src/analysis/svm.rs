use serde::{Deserialize, Serialize};

use super::BinaryLabels;
use crate::{Error, Matrix, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SvmKernel {
    Linear,
    Rbf { gamma: f64 },
}

impl SvmKernel {
    /// RBF with `γ = 1 / (2 · median pairwise squared distance)`; falls back
    /// to `γ = 1` when that median is zero.
    pub fn rbf_median_heuristic(x: &Matrix) -> Self {
        let n = x.nrows();
        let mut d2 = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d2.push(sq_dist_rows(x, i, x, j));
            }
        }
        let med = median(&mut d2);
        let gamma = if med > 0.0 { 1.0 / (2.0 * med) } else { 1.0 };
        SvmKernel::Rbf { gamma }
    }

    fn eval(&self, a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
        match *self {
            SvmKernel::Linear => a.row(i).iter().zip(b.row(j).iter()).map(|(p, q)| p * q).sum(),
            SvmKernel::Rbf { gamma } => (-gamma * sq_dist_rows(a, i, b, j)).exp(),
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn sq_dist_rows(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    a.row(i).iter().zip(b.row(j).iter()).map(|(p, q)| (p - q).powi(2)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: SvmKernel,
    /// Soft-margin penalty.
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Kept with the model; the solver itself is deterministic.
    pub seed: u64,
}

impl SvmParams {
    pub fn new(kernel: SvmKernel) -> Self {
        Self {
            kernel,
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: SvmKernel,
    pub c: f64,
    pub support_vectors: Matrix,
    /// Training indices of the support vectors.
    pub support_indices: Vec<usize>,
    /// `α_i` of each support vector.
    pub alphas: Vec<f64>,
    /// `±1` label of each support vector.
    pub signs: Vec<f64>,
    pub bias: f64,
    /// Maximal KKT violation at exit.
    pub kkt_gap: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl SvmModel {
    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| {
                self.bias
                    + (0..self.alphas.len())
                        .map(|s| self.alphas[s] * self.signs[s] * self.kernel.eval(&self.support_vectors, s, x, r))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Class 1 where the decision function is positive.
    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        self.decision_function(x).into_iter().map(|f| u8::from(f > 0.0)).collect()
    }
}

/// Soft-margin C-SVC dual solved by sequential minimal optimisation with
/// second-order working-set selection.
pub fn svm_train(x: &Matrix, labels: &BinaryLabels, params: &SvmParams) -> Result<SvmModel> {
    let n = x.nrows();
    if labels.labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "svm labels",
            expected: n,
            got: labels.labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::InvalidConfig("svm C and tolerance must be positive".into()));
    }
    if let SvmKernel::Rbf { gamma } = params.kernel {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig("rbf gamma must be positive".into()));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm input"));
    }
    let positives = labels.labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }

    let y: Vec<f64> = labels.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let k = Matrix::from_fn(n, n, |i, j| params.kernel.eval(x, i, x, j));
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX {
                let b = gmax - v;
                if b > 0.0 {
                    let a = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                    let obj = -b * b / if a > 0.0 { a } else { TAU };
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        gap = gmax - gmin;
        if gap < params.tol || j == usize::MAX || iterations >= params.max_iter {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[(i, j)];
        if y[i] != y[j] {
            let quad = (k[(i, i)] + k[(j, j)] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[(i, i)] + k[(j, j)] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[(t, i)] * di + y[j] * k[(t, j)] * dj);
        }
    }

    // Offset from free vectors, or the middle of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };

    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        kernel: params.kernel,
        c,
        support_vectors: x.select_rows(&support_indices),
        alphas: support_indices.iter().map(|&t| alpha[t]).collect(),
        signs: support_indices.iter().map(|&t| y[t]).collect(),
        support_indices,
        bias: -rho,
        kkt_gap: gap,
        iterations,
        seed: params.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::BinaryLabels;

    fn labels(v: Vec<u8>) -> BinaryLabels {
        BinaryLabels {
            labels: v,
            threshold: 0.5,
            degenerate: false,
        }
    }

    fn blobs() -> (Matrix, BinaryLabels) {
        let n = 30;
        let x = Matrix::from_fn(n, 2, |i, j| {
            let centre = if i < n / 2 { -3.0 } else { 3.0 };
            centre + (((i * 13 + j * 7) % 11) as f64 / 10.0 - 0.5)
        });
        let y = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        (x, labels(y))
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs();
        for kernel in [SvmKernel::Linear, SvmKernel::rbf_median_heuristic(&x)] {
            let m = svm_train(&x, &y, &SvmParams::new(kernel)).unwrap();
            assert_eq!(m.predict(&x), y.labels);
            assert!(m.kkt_gap < 1e-3);
            assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= m.c));
            let balance: f64 = m.alphas.iter().zip(&m.signs).map(|(a, s)| a * s).sum();
            assert!(balance.abs() < 1e-6);
        }
    }

    #[test]
    fn label_flip_negates_decision() {
        let (x, y) = blobs();
        let mut p = SvmParams::new(SvmKernel::Linear);
        p.tol = 1e-9;
        let m = svm_train(&x, &y, &p).unwrap();
        let flipped = labels(y.labels.iter().map(|l| 1 - l).collect());
        let f = svm_train(&x, &flipped, &p).unwrap();
        for (a, b) in m.decision_function(&x).iter().zip(f.decision_function(&x)) {
            assert!((a + b).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicated_rows() {
        let (x, y) = blobs();
        let n = x.nrows();
        let xx = Matrix::from_fn(2 * n, 2, |i, j| x[(i % n, j)]);
        let yy = labels((0..2 * n).map(|i| y.labels[i % n]).collect());
        let mut p = SvmParams::new(SvmKernel::Linear);
        p.tol = 1e-10;
        let a = svm_train(&x, &y, &p).unwrap().decision_function(&x);
        let b = svm_train(&xx, &yy, &p).unwrap().decision_function(&x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6, "{u} {v}");
        }
    }

    #[test]
    fn overlapping_classes_stay_box_feasible() {
        let x = Matrix::from_fn(40, 2, |i, j| ((i * 31 + j * 17) % 23) as f64 / 7.0);
        let y = labels((0..40).map(|i| u8::from((i * 7) % 5 < 2)).collect());
        let mut p = SvmParams::new(SvmKernel::Rbf { gamma: 0.5 });
        p.c = 2.0;
        let m = svm_train(&x, &y, &p).unwrap();
        assert!(m.kkt_gap < 1e-3);
        assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= 2.0));
        let balance: f64 = m.alphas.iter().zip(&m.signs).map(|(a, s)| a * s).sum();
        assert!(balance.abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            svm_train(&x, &labels(vec![1, 1, 1]), &SvmParams::new(SvmKernel::Linear)),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
