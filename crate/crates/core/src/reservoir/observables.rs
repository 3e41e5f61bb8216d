use super::{build_hamiltonian, evolve, DetuningPattern, ObservableTrace, QuantumState, ReservoirConfig};
use crate::{Error, Result};

fn check_atom(state: &QuantumState, i: usize) -> Result<()> {
    if i >= state.n_atoms() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: state.n_atoms(),
        });
    }
    Ok(())
}

/// `<Z_i>` with `Z = I - 2n`.
pub fn expect_z(state: &QuantumState, i: usize) -> Result<f64> {
    check_atom(state, i)?;
    let v: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| if b >> i & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum();
    Ok(v.clamp(-1.0, 1.0))
}

/// `<Z_i Z_j>` for `i != j`.
pub fn expect_zz(state: &QuantumState, i: usize, j: usize) -> Result<f64> {
    check_atom(state, i)?;
    check_atom(state, j)?;
    if i == j {
        return Err(Error::SameAtom(i));
    }
    let v: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| {
            if (b >> i ^ b >> j) & 1 == 0 {
                a.norm_sqr()
            } else {
                -a.norm_sqr()
            }
        })
        .sum();
    Ok(v.clamp(-1.0, 1.0))
}

pub fn pair_count(n_atoms: usize) -> usize {
    n_atoms * n_atoms.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(n_atoms: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n_atoms);
    i * (2 * n_atoms - i - 1) / 2 + (j - i - 1)
}

/// All one- and two-body Z expectations of `state` in one sweep over the
/// probabilities: `<Z_i> = 1 - 2<n_i>`, `<Z_i Z_j> = 1 - 2<n_i> - 2<n_j> + 4<n_i n_j>`.
fn all_observables(state: &QuantumState) -> (Vec<f64>, Vec<f64>) {
    let n = state.n_atoms();
    let mut single = vec![0.0; n];
    let mut pair = vec![0.0; n * n];
    let mut set_bits = Vec::with_capacity(n);
    for (b, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 || b == 0 {
            continue;
        }
        set_bits.clear();
        let mut bits = b;
        while bits != 0 {
            set_bits.push(bits.trailing_zeros() as usize);
            bits &= bits - 1;
        }
        for (x, &i) in set_bits.iter().enumerate() {
            single[i] += p;
            for &j in &set_bits[x + 1..] {
                pair[i * n + j] += p;
            }
        }
    }
    let one_body: Vec<f64> = single.iter().map(|ni| (1.0 - 2.0 * ni).clamp(-1.0, 1.0)).collect();
    let mut two_body = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 - 2.0 * single[i] - 2.0 * single[j] + 4.0 * pair[i * n + j];
            two_body.push(v.clamp(-1.0, 1.0));
        }
    }
    (one_body, two_body)
}

/// Runs the protocol from the all-ground state and records every `<Z_i>`
/// and `<Z_i Z_j>` at each snapshot time.
pub fn snapshot_observables(config: &ReservoirConfig, pattern: &DetuningPattern) -> Result<ObservableTrace> {
    let h = build_hamiltonian(config, pattern)?;
    let times = config.snapshot_times();
    let mut state = QuantumState::ground(config.n_atoms());
    let mut now = 0.0;
    let mut trace = ObservableTrace {
        snapshot_times: times.clone(),
        one_body: Vec::with_capacity(times.len()),
        two_body: Vec::with_capacity(times.len()),
        norms: Vec::with_capacity(times.len()),
    };
    for &t in &times {
        state = evolve(&h, &state, t - now)?;
        now = t;
        let (one, two) = all_observables(&state);
        trace.one_body.push(one);
        trace.two_body.push(two);
        trace.norms.push(state.norm());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn plus_state(n: usize) -> QuantumState {
        let dim = 1 << n;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        QuantumState::from_amplitudes(vec![a; dim]).unwrap()
    }

    #[test]
    fn z_examples() {
        assert_eq!(expect_z(&QuantumState::ground(3), 1).unwrap(), 1.0);
        assert_eq!(expect_z(&QuantumState::basis(3, 7), 2).unwrap(), -1.0);
        let s = QuantumState::from_amplitudes(vec![
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, FRAC_1_SQRT_2),
        ])
        .unwrap();
        assert!(expect_z(&s, 0).unwrap().abs() < 1e-12);
        assert!(matches!(expect_z(&s, 1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn zz_examples() {
        assert_eq!(expect_zz(&QuantumState::ground(2), 0, 1).unwrap(), 1.0);
        // atom 0 excited, atom 1 ground
        assert_eq!(expect_zz(&QuantumState::basis(2, 0b01), 0, 1).unwrap(), -1.0);
        assert!(expect_zz(&plus_state(2), 0, 1).unwrap().abs() < 1e-12);
        assert!(matches!(expect_zz(&plus_state(2), 1, 1), Err(Error::SameAtom(1))));
        assert!(expect_zz(&plus_state(2), 0, 2).is_err());
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let n = 5;
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(pair_index(n, i, j), p);
                p += 1;
            }
        }
        assert_eq!(p, pair_count(n));
    }

    #[test]
    fn sweep_matches_direct_expectations() {
        let cfg = ReservoirConfig::chain_with_spacing(4, 6.0);
        let h = build_hamiltonian(&cfg, &DetuningPattern::new(vec![0.1, -0.4, 0.9, -1.0]).unwrap()).unwrap();
        let s = evolve(&h, &QuantumState::ground(4), 1.7).unwrap();
        let (one, two) = all_observables(&s);
        for i in 0..4 {
            assert!((one[i] - expect_z(&s, i).unwrap()).abs() < 1e-12);
            for j in i + 1..4 {
                let direct = expect_zz(&s, i, j).unwrap();
                assert!((two[pair_index(4, i, j)] - direct).abs() < 1e-12);
                assert!((direct - expect_zz(&s, j, i).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shapes_and_undriven_trace() {
        let cfg = ReservoirConfig {
            rabi_amplitude: 0.0,
            ..ReservoirConfig::chain(5)
        };
        let trace = snapshot_observables(&cfg, &DetuningPattern::new(vec![0.5; 5]).unwrap()).unwrap();
        assert_eq!(trace.one_body.len(), 11);
        assert_eq!(trace.two_body[0].len(), 10);
        assert!(trace.one_body.iter().flatten().all(|&z| z == 1.0));
        assert!(trace.two_body.iter().flatten().all(|&z| z == 1.0));
    }

    #[test]
    fn mirror_symmetry_of_uniform_chain() {
        let cfg = ReservoirConfig::chain(5);
        let f = vec![0.9, -0.3, 0.2, -0.8, 0.4];
        let rev: Vec<f64> = f.iter().rev().copied().collect();
        let a = snapshot_observables(&cfg, &DetuningPattern::new(f).unwrap()).unwrap();
        let b = snapshot_observables(&cfg, &DetuningPattern::new(rev).unwrap()).unwrap();
        for (ra, rb) in a.one_body.iter().zip(&b.one_body) {
            for i in 0..5 {
                assert!((ra[i] - rb[4 - i]).abs() < 1e-8);
            }
        }
    }
}
