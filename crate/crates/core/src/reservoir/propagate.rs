//! Chebyshev propagation of a time-independent Hamiltonian.
//!
//! With the spectrum mapped onto `[-1, 1]` by `H = a + h·G`,
//!
//! `exp(-iHt) = exp(-iat) Σ_k (2 - δ_k0) (-i)^k J_k(ht) T_k(G)`,
//!
//! where `J_k` are Bessel functions of the first kind. The series is cut once
//! `k > ht` and `|J_k(ht)|` drops below the tolerance; beyond that point the
//! coefficients decay faster than geometrically.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{HamiltonianRep, QuantumState};
use crate::{Error, Result};

/// Largest Bessel argument handled in one Chebyshev expansion; longer
/// durations are split into equal substeps.
const MAX_ARGUMENT: f64 = 40.0;
const DEFAULT_TOLERANCE: f64 = 1e-16;
const PAR_THRESHOLD: usize = 1 << 12;
const PAR_CHUNK: usize = 1 << 10;

/// `J_0(x), J_1(x), …` up to the order where the series may be truncated,
/// computed by Miller's backward recurrence normalised with
/// `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_sequence(x: f64, tolerance: f64) -> Vec<f64> {
    if x == 0.0 {
        return vec![1.0];
    }
    let x = x.abs();
    let mut start = (x + 10.0 * x.cbrt() + 40.0).ceil() as usize;
    start += start % 2;

    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / x * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    for v in vals.iter_mut() {
        *v /= norm;
    }

    let cut = (1..=start)
        .find(|&k| k as f64 > x && vals[k].abs() < tolerance)
        .unwrap_or(start);
    vals.truncate(cut);
    vals
}

/// `exp(-i H t) |state>`.
pub fn evolve(h: &HamiltonianRep, state: &QuantumState, duration: f64) -> Result<QuantumState> {
    evolve_with_tolerance(h, state, duration, DEFAULT_TOLERANCE)
}

pub fn evolve_with_tolerance(
    h: &HamiltonianRep,
    state: &QuantumState,
    duration: f64,
    tolerance: f64,
) -> Result<QuantumState> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            what: "state dimension",
            expected: h.dim(),
            got: state.dim(),
        });
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidConfig(format!("duration {duration} must be >= 0")));
    }
    if duration == 0.0 {
        return Ok(state.clone());
    }
    if h.rabi_amplitude() == 0.0 {
        // Diagonal generator: exact phases.
        let amps = state
            .amplitudes()
            .iter()
            .zip(h.diagonal())
            .map(|(a, &e)| a * Complex64::from_polar(1.0, -e * duration))
            .collect();
        return Ok(QuantumState::from_raw(amps, state.n_atoms()));
    }

    let (lo, hi) = h.spectral_bounds();
    let center = 0.5 * (hi + lo);
    let half_width = (0.5 * (hi - lo)).max(1e-12);
    let substeps = (half_width * duration / MAX_ARGUMENT).ceil().max(1.0) as usize;
    let dt = duration / substeps as f64;
    let coeffs = bessel_j_sequence(half_width * dt, tolerance);
    let phase = Complex64::from_polar(1.0, -center * dt);

    let mut psi = state.amplitudes().to_vec();
    for _ in 0..substeps {
        psi = chebyshev_step(h, &psi, center, half_width, &coeffs, phase);
    }
    Ok(QuantumState::from_raw(psi, state.n_atoms()))
}

fn chebyshev_step(
    h: &HamiltonianRep,
    psi: &[Complex64],
    center: f64,
    half_width: f64,
    coeffs: &[f64],
    phase: Complex64,
) -> Vec<Complex64> {
    let dim = psi.len();
    let zero = Complex64::new(0.0, 0.0);
    let scale = 1.0 / half_width;
    let minus_i = Complex64::new(0.0, -1.0);

    let mut acc: Vec<Complex64> = psi.iter().map(|a| a * coeffs[0]).collect();
    if coeffs.len() == 1 {
        return acc.into_iter().map(|a| a * phase).collect();
    }

    let mut prev = psi.to_vec();
    let mut curr = vec![zero; dim];
    h.apply_shifted(&prev, &mut curr, center, scale);
    let mut next = vec![zero; dim];
    let mut ik = minus_i;
    axpy(&mut acc, &curr, ik * (2.0 * coeffs[1]));

    for &c in &coeffs[2..] {
        ik *= minus_i;
        // next = 2 G curr - prev
        h.apply_shifted(&curr, &mut next, center, 2.0 * scale);
        sub_assign(&mut next, &prev);
        axpy(&mut acc, &next, ik * (2.0 * c));
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    for a in acc.iter_mut() {
        *a *= phase;
    }
    acc
}

fn axpy(y: &mut [Complex64], x: &[Complex64], alpha: Complex64) {
    if y.len() >= PAR_THRESHOLD {
        y.par_chunks_mut(PAR_CHUNK)
            .zip(x.par_chunks(PAR_CHUNK))
            .for_each(|(ys, xs)| ys.iter_mut().zip(xs).for_each(|(y, x)| *y += alpha * x));
    } else {
        y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
    }
}

fn sub_assign(y: &mut [Complex64], x: &[Complex64]) {
    if y.len() >= PAR_THRESHOLD {
        y.par_chunks_mut(PAR_CHUNK)
            .zip(x.par_chunks(PAR_CHUNK))
            .for_each(|(ys, xs)| ys.iter_mut().zip(xs).for_each(|(y, x)| *y -= x));
    } else {
        y.iter_mut().zip(x).for_each(|(y, x)| *y -= x);
    }
}
