//! Neutral-atom reservoir: Rydberg Hamiltonian, state propagation and
//! computational-basis observables.
//!
//! Basis states are indexed by a bit string `b` of length `N`; bit `j` set
//! means atom `j` is in the Rydberg state `|r>`, clear means ground `|g>`.
//! The Pauli-Z convention is `Z_j = I - 2 n_j`, so a ground-state atom reads
//! `+1` and an excited atom `-1`.

mod hamiltonian;
mod observables;
mod propagate;

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use hamiltonian::{build_hamiltonian, HamiltonianRep};
pub use observables::{expect_z, expect_zz, pair_count, pair_index, snapshot_observables};
pub use propagate::{bessel_j_sequence, evolve, evolve_with_tolerance};

/// Default Van der Waals coefficient, rad·µs⁻¹·µm⁶.
pub const DEFAULT_C6: f64 = 2.0 * PI * 862_690.0;

/// Physical parameters of the reservoir protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// Atom coordinates in µm.
    pub positions: Vec<[f64; 3]>,
    /// Global Rabi amplitude Ω, rad/µs.
    pub rabi_amplitude: f64,
    /// Global detuning Δ_g, rad/µs.
    pub global_detuning: f64,
    /// Local detuning scale Δ_l, rad/µs; atom `j` sees `f_j Δ_l`.
    pub local_detuning_amplitude: f64,
    /// Interaction coefficient C in `V_jk = C / r_jk^6`.
    pub interaction_coefficient: f64,
    /// Total evolution time, µs.
    pub total_time: f64,
    /// Spacing of observable snapshots, µs.
    pub snapshot_step: f64,
}

impl ReservoirConfig {
    /// Linear chain along x with 10 µm spacing and the default drive.
    pub fn chain(n_atoms: usize) -> Self {
        Self::chain_with_spacing(n_atoms, 10.0)
    }

    pub fn chain_with_spacing(n_atoms: usize, spacing: f64) -> Self {
        Self {
            positions: (0..n_atoms).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect(),
            rabi_amplitude: 2.0 * PI,
            global_detuning: 0.0,
            local_detuning_amplitude: 6.0,
            interaction_coefficient: DEFAULT_C6,
            total_time: 4.3,
            snapshot_step: 0.4,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_atoms();
        if n == 0 {
            return Err(Error::InvalidConfig("reservoir needs at least one atom".into()));
        }
        if n > 26 {
            return Err(Error::InvalidConfig(format!(
                "{n} atoms exceeds the state-vector limit of 26"
            )));
        }
        let finite = [
            self.rabi_amplitude,
            self.global_detuning,
            self.local_detuning_amplitude,
            self.interaction_coefficient,
            self.total_time,
            self.snapshot_step,
        ]
        .iter()
        .chain(self.positions.iter().flatten())
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("reservoir config"));
        }
        if self.rabi_amplitude < 0.0 {
            return Err(Error::InvalidConfig("rabi_amplitude must be >= 0".into()));
        }
        if self.local_detuning_amplitude < 0.0 {
            return Err(Error::InvalidConfig(
                "local_detuning_amplitude must be >= 0".into(),
            ));
        }
        if self.interaction_coefficient <= 0.0 {
            return Err(Error::InvalidConfig(
                "interaction_coefficient must be > 0".into(),
            ));
        }
        if self.total_time <= 0.0 {
            return Err(Error::InvalidConfig("total_time must be > 0".into()));
        }
        if !(self.snapshot_step > 0.0 && self.snapshot_step <= self.total_time) {
            return Err(Error::InvalidConfig(
                "snapshot_step must lie in (0, total_time]".into(),
            ));
        }
        for j in 0..n {
            for k in j + 1..n {
                if self.distance(j, k) <= 0.0 {
                    return Err(Error::CoincidentAtoms(j, k));
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, j: usize, k: usize) -> f64 {
        let (a, b) = (self.positions[j], self.positions[k]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// `V_jk = C / |r_j - r_k|^6`.
    pub fn interaction(&self, j: usize, k: usize) -> f64 {
        self.interaction_coefficient / self.distance(j, k).powi(6)
    }

    /// Snapshot times: every multiple of `snapshot_step` up to `total_time`,
    /// then `total_time` itself when it is not already a multiple.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let eps = 1e-9 * self.total_time;
        let steps = ((self.total_time + eps) / self.snapshot_step).floor() as usize;
        let mut times: Vec<f64> = (1..=steps).map(|k| k as f64 * self.snapshot_step).collect();
        match times.last_mut() {
            Some(last) if (self.total_time - *last).abs() <= eps => *last = self.total_time,
            _ => times.push(self.total_time),
        }
        times
    }
}

/// Per-atom detuning modulation `f_j ∈ [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningPattern(Vec<f64>);

impl DetuningPattern {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("detuning pattern"));
        }
        if let Some(v) = values.iter().find(|v| v.abs() > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "detuning modulation {v} outside [-1, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pure state over the `2^N` computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    n_atoms: usize,
}

impl QuantumState {
    /// All atoms in `|g>`.
    pub fn ground(n_atoms: usize) -> Self {
        Self::basis(n_atoms, 0)
    }

    pub fn basis(n_atoms: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_atoms];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            n_atoms,
        }
    }

    /// Wraps amplitudes; the length must be a power of two and the norm 1
    /// within 1e-8.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "state dimension {dim} is not a power of two"
            )));
        }
        let state = Self {
            n_atoms: dim.trailing_zeros() as usize,
            amplitudes,
        };
        if (state.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidConfig(format!(
                "state norm {} is not 1",
                state.norm()
            )));
        }
        Ok(state)
    }

    pub(crate) fn from_raw(amplitudes: Vec<Complex64>, n_atoms: usize) -> Self {
        Self {
            amplitudes,
            n_atoms,
        }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObservableKind {
    Z,
    ZZ,
}

impl std::fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ObservableKind::Z => "Z",
            ObservableKind::ZZ => "ZZ",
        })
    }
}

/// Observable time series of one reservoir run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub snapshot_times: Vec<f64>,
    /// `one_body[t][i] = <Z_i>` at snapshot `t`.
    pub one_body: Vec<Vec<f64>>,
    /// `two_body[t][p] = <Z_i Z_j>` with pairs `i < j` in lexicographic order.
    pub two_body: Vec<Vec<f64>>,
    /// State norm at each snapshot.
    pub norms: Vec<f64>,
}

impl ObservableTrace {
    pub fn n_atoms(&self) -> usize {
        self.one_body.first().map_or(0, Vec::len)
    }

    /// Columnar export: `time_us,kind,i,j,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_us", "kind", "i", "j", "value"])?;
        let n = self.n_atoms();
        for (t, &time) in self.snapshot_times.iter().enumerate() {
            for i in 0..n {
                w.write_record([
                    format!("{time}"),
                    "Z".into(),
                    i.to_string(),
                    String::new(),
                    format!("{}", self.one_body[t][i]),
                ])?;
            }
            let mut p = 0;
            for i in 0..n {
                for j in i + 1..n {
                    w.write_record([
                        format!("{time}"),
                        "ZZ".into(),
                        i.to_string(),
                        j.to_string(),
                        format!("{}", self.two_body[t][p]),
                    ])?;
                    p += 1;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_has_eleven_snapshots() {
        let times = ReservoirConfig::chain(3).snapshot_times();
        assert_eq!(times.len(), 11);
        assert!((times[0] - 0.4).abs() < 1e-12);
        assert!((times[9] - 4.0).abs() < 1e-12);
        assert_eq!(times[10], 4.3);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_multiple_schedule_ends_on_total() {
        let cfg = ReservoirConfig {
            total_time: 1.2,
            ..ReservoirConfig::chain(1)
        };
        let times = cfg.snapshot_times();
        assert_eq!(times.len(), 3);
        assert_eq!(*times.last().unwrap(), 1.2);
    }

    #[test]
    fn config_validation() {
        assert!(ReservoirConfig::chain(4).validate().is_ok());
        let mut cfg = ReservoirConfig::chain(3);
        cfg.positions[2] = cfg.positions[0];
        assert!(matches!(cfg.validate(), Err(Error::CoincidentAtoms(0, 2))));
        let cfg = ReservoirConfig {
            snapshot_step: 5.0,
            ..ReservoirConfig::chain(2)
        };
        assert!(cfg.validate().is_err());
        let cfg = ReservoirConfig {
            interaction_coefficient: 0.0,
            ..ReservoirConfig::chain(2)
        };
        assert!(cfg.validate().is_err());
        assert!(ReservoirConfig::chain(0).validate().is_err());
    }

    #[test]
    fn pattern_bounds() {
        assert!(DetuningPattern::new(vec![-1.0, 1.0, 0.3]).is_ok());
        assert!(DetuningPattern::new(vec![1.0001]).is_err());
        assert!(DetuningPattern::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn state_constructors() {
        let s = QuantumState::ground(3);
        assert_eq!(s.dim(), 8);
        assert_eq!(s.norm(), 1.0);
        assert!(QuantumState::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]).is_err());
        assert!(QuantumState::from_amplitudes(vec![Complex64::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let cfg = ReservoirConfig {
            total_time: 0.8,
            ..ReservoirConfig::chain(3)
        };
        let trace = snapshot_observables(&cfg, &DetuningPattern::zeros(3)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time_us,kind,i,j,value");
        // 2 snapshots × (3 Z + 3 ZZ)
        assert_eq!(lines.len(), 1 + 2 * 6);
        assert!(lines[1].starts_with("0.4,Z,0,,"));
        assert!(lines[4].starts_with("0.4,ZZ,0,1,"));
    }
}
