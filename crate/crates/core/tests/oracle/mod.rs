//! Dense reference implementations used only by tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Full `2^N × 2^N` Rydberg Hamiltonian, built entry by entry. Bit `j` of a
/// basis index set means atom `j` is excited.
pub fn dense_hamiltonian(
    positions: &[[f64; 3]],
    omega: f64,
    global_detuning: f64,
    local_detuning: f64,
    c6: f64,
    f: &[f64],
) -> DMatrix<f64> {
    let n = positions.len();
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        let occ = |j: usize| ((b >> j) & 1) as f64;
        let mut e = 0.0;
        for j in 0..n {
            e -= (global_detuning + f[j] * local_detuning) * occ(j);
            for k in j + 1..n {
                let r2: f64 = (0..3).map(|a| (positions[j][a] - positions[k][a]).powi(2)).sum();
                e += c6 / r2.powi(3) * occ(j) * occ(k);
            }
            h[(b ^ (1 << j), b)] += omega / 2.0;
        }
        h[(b, b)] = e;
    }
    h
}

/// `exp(-i H t)` by scaling and squaring of a truncated Taylor series.
pub fn expm_minus_i(h: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
    let dim = h.nrows();
    let a: DMatrix<Complex64> = h.map(|v| Complex64::new(0.0, -v * t));
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * dim as f64;
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let scaled = a / Complex64::new(2f64.powi(s), 0.0);
    let mut term = DMatrix::<Complex64>::identity(dim, dim);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Spectral propagator `V exp(-i Λ t) Vᵀ` from a real symmetric eigensolve.
pub fn eigen_propagator(h: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        h.nrows(),
        eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -l * t)),
    ));
    &v * phases * v.transpose()
}

pub fn ground(dim: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(dim);
    v[0] = Complex64::new(1.0, 0.0);
    v
}

/// `<Z_i> = 1 - 2 <n_i>`.
pub fn z(psi: &DVector<Complex64>, i: usize) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(b, a)| if (b >> i) & 1 == 1 { -a.norm_sqr() } else { a.norm_sqr() })
        .sum()
}

pub fn zz(psi: &DVector<Complex64>, i: usize, j: usize) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(b, a)| if ((b >> i) ^ (b >> j)) & 1 == 1 { -a.norm_sqr() } else { a.norm_sqr() })
        .sum()
}

pub fn n_pair(psi: &DVector<Complex64>, i: usize, j: usize) -> f64 {
    psi.iter()
        .enumerate()
        .filter(|(b, _)| (b >> i) & 1 == 1 && (b >> j) & 1 == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Shapley values by enumerating every coalition, with absent features
/// taken from a single background row.
pub fn exact_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[f64]) -> Vec<f64> {
    let d = x.len();
    let value = |mask: usize| {
        let z: Vec<f64> = (0..d).map(|j| if (mask >> j) & 1 == 1 { x[j] } else { background[j] }).collect();
        f(&z)
    };
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << d {
            if (mask >> i) & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(d - s - 1) / fact(d);
            *p += w * (value(mask | 1 << i) - value(mask));
        }
    }
    phi
}
