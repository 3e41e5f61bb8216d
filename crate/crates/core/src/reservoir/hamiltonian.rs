use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{DetuningPattern, ReservoirConfig};
use crate::{Error, Result};

/// Below this dimension the matrix-vector product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 12;
const PAR_CHUNK: usize = 1 << 10;

/// Rydberg Hamiltonian in the computational basis.
///
/// The diagonal holds interaction and detuning energies; the drive couples
/// every pair of basis states that differ in exactly one bit with amplitude
/// `Ω/2`. The drive is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianRep {
    n_atoms: usize,
    diagonal: Vec<f64>,
    rabi_amplitude: f64,
}

/// `H = Ω/2 Σ_j X_j + Σ_{j<k} V_jk n_j n_k - Σ_j (Δ_g + f_j Δ_l) n_j`.
pub fn build_hamiltonian(config: &ReservoirConfig, pattern: &DetuningPattern) -> Result<HamiltonianRep> {
    config.validate()?;
    let n = config.n_atoms();
    if pattern.len() != n {
        return Err(Error::DimensionMismatch {
            what: "detuning pattern length",
            expected: n,
            got: pattern.len(),
        });
    }
    let onsite: Vec<f64> = pattern
        .values()
        .iter()
        .map(|f| -(config.global_detuning + f * config.local_detuning_amplitude))
        .collect();
    let mut coupling = vec![0.0; n * n];
    for j in 0..n {
        for k in j + 1..n {
            let v = config.interaction(j, k);
            coupling[j * n + k] = v;
            coupling[k * n + j] = v;
        }
    }

    // diag[b] = diag[b without its lowest set bit j] + energy added by exciting j.
    let dim = 1usize << n;
    let mut diagonal = vec![0.0; dim];
    for b in 1..dim {
        let j = b.trailing_zeros() as usize;
        let rest = b & (b - 1);
        let mut e = onsite[j];
        let mut bits = rest;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            e += coupling[j * n + k];
            bits &= bits - 1;
        }
        diagonal[b] = diagonal[rest] + e;
    }

    Ok(HamiltonianRep {
        n_atoms: n,
        diagonal,
        rabi_amplitude: config.rabi_amplitude,
    })
}

impl HamiltonianRep {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn rabi_amplitude(&self) -> f64 {
        self.rabi_amplitude
    }

    /// Off-diagonal amplitude `Ω/2` between states one bit-flip apart.
    pub fn rabi_coupling(&self) -> f64 {
        0.5 * self.rabi_amplitude
    }

    /// Gershgorin bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let lo = self.diagonal.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.diagonal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let radius = self.rabi_coupling().abs() * self.n_atoms as f64;
        (lo - radius, hi + radius)
    }

    /// `out = (H - shift) psi * scale`. Each output element depends only on
    /// `psi`, so the result is independent of thread scheduling.
    pub(crate) fn apply_shifted(&self, psi: &[Complex64], out: &mut [Complex64], shift: f64, scale: f64) {
        let half = self.rabi_coupling();
        let n = self.n_atoms;
        let kernel = |offset: usize, chunk: &mut [Complex64]| {
            for (i, o) in chunk.iter_mut().enumerate() {
                let b = offset + i;
                let mut acc = psi[b] * (self.diagonal[b] - shift);
                if half != 0.0 {
                    let mut flip = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        flip += psi[b ^ (1 << j)];
                    }
                    acc += flip * half;
                }
                *o = acc * scale;
            }
        };
        if out.len() >= PAR_THRESHOLD {
            out.par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| kernel(c * PAR_CHUNK, chunk));
        } else {
            kernel(0, out);
        }
    }

    /// `H psi`.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply_shifted(psi, &mut out, 0.0, 1.0);
        out
    }

    /// Dense matrix, for small systems and cross-checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let half = self.rabi_coupling();
        DMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                self.diagonal[r]
            } else if (r ^ c).count_ones() == 1 {
                half
            } else {
                0.0
            }
        })
    }
}
