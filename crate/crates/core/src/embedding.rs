//! Feature → detuning encoding and reservoir embeddings.
//!
//! Each record drives its own reservoir run: feature `j` sets the local
//! detuning of atom `j`, and the resulting observable trace, flattened in a
//! fixed order, becomes the record's embedding.
//!
//! Column order is atom-major: every snapshot of `<Z_0>`, then every
//! snapshot of `<Z_1>`, and so on; in two-body mode the one-body block is
//! followed by every snapshot of each `<Z_i Z_j>` with `(i, j)` in
//! lexicographic order. One-body embeddings are therefore exactly the leading
//! `N·T` columns of two-body embeddings.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MolecularDataset;
use crate::reservoir::{snapshot_observables, DetuningPattern, ObservableKind, ObservableTrace, ReservoirConfig};
use crate::{Error, Matrix, Result};

/// Per-feature min/max learned on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub degenerate_mask: Vec<bool>,
}

impl FeatureScaler {
    pub fn arity(&self) -> usize {
        self.mins.len()
    }
}

pub fn fit_scaler(train_features: &Matrix) -> Result<FeatureScaler> {
    if train_features.nrows() == 0 {
        return Err(Error::Empty("scaler training rows"));
    }
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    for col in train_features.column_iter() {
        mins.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        maxs.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    if mins.iter().chain(&maxs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scaler training rows"));
    }
    let degenerate_mask = mins.iter().zip(&maxs).map(|(a, b)| a == b).collect();
    Ok(FeatureScaler {
        mins,
        maxs,
        degenerate_mask,
    })
}

/// `f_j = clamp(2 (x_j - min_j) / (max_j - min_j) - 1, -1, 1)`; degenerate
/// features map to 0.
pub fn encode(scaler: &FeatureScaler, record: &[f64]) -> Result<DetuningPattern> {
    if record.len() != scaler.arity() {
        return Err(Error::DimensionMismatch {
            what: "record arity",
            expected: scaler.arity(),
            got: record.len(),
        });
    }
    let f = record
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if scaler.degenerate_mask[j] {
                0.0
            } else {
                let range = scaler.maxs[j] - scaler.mins[j];
                (2.0 * (x - scaler.mins[j]) / range - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect();
    DetuningPattern::new(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    OneBody,
    TwoBody,
}

impl EmbeddingMode {
    /// Embedding width for `n_atoms` atoms and `n_times` snapshots.
    pub fn width(self, n_atoms: usize, n_times: usize) -> usize {
        let one = n_atoms * n_times;
        match self {
            EmbeddingMode::OneBody => one,
            EmbeddingMode::TwoBody => one + n_atoms * n_atoms.saturating_sub(1) / 2 * n_times,
        }
    }
}

/// Provenance of one embedding column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub kind: ObservableKind,
    pub i: usize,
    pub j: Option<usize>,
    pub time_us: f64,
}

impl std::fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.j {
            Some(j) => write!(f, "{}_{}_{}@{}", self.kind, self.i, j, self.time_us),
            None => write!(f, "{}_{}@{}", self.kind, self.i, self.time_us),
        }
    }
}

pub fn column_labels(n_atoms: usize, times: &[f64], mode: EmbeddingMode) -> Vec<ColumnLabel> {
    let mut labels = Vec::with_capacity(mode.width(n_atoms, times.len()));
    for i in 0..n_atoms {
        labels.extend(times.iter().map(|&t| ColumnLabel {
            kind: ObservableKind::Z,
            i,
            j: None,
            time_us: t,
        }));
    }
    if mode == EmbeddingMode::TwoBody {
        for i in 0..n_atoms {
            for j in i + 1..n_atoms {
                labels.extend(times.iter().map(|&t| ColumnLabel {
                    kind: ObservableKind::ZZ,
                    i,
                    j: Some(j),
                    time_us: t,
                }));
            }
        }
    }
    labels
}

/// Flattens a trace in the documented column order.
pub fn flatten_trace(trace: &ObservableTrace, mode: EmbeddingMode) -> Vec<f64> {
    let n = trace.n_atoms();
    let t = trace.snapshot_times.len();
    let mut out = Vec::with_capacity(mode.width(n, t));
    for i in 0..n {
        out.extend(trace.one_body.iter().map(|row| row[i]));
    }
    if mode == EmbeddingMode::TwoBody {
        let pairs = trace.two_body.first().map_or(0, Vec::len);
        for p in 0..pairs {
            out.extend(trace.two_body.iter().map(|row| row[p]));
        }
    }
    out
}

pub fn embed_record(config: &ReservoirConfig, pattern: &DetuningPattern, mode: EmbeddingMode) -> Result<Vec<f64>> {
    let trace = snapshot_observables(config, pattern)?;
    Ok(flatten_trace(&trace, mode))
}

/// Reservoir embeddings of a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub record_ids: Vec<String>,
    pub values: Matrix,
    pub column_labels: Vec<ColumnLabel>,
    pub mode: EmbeddingMode,
}

impl EmbeddingMatrix {
    /// The one-body block of a two-body embedding.
    pub fn to_one_body(&self) -> EmbeddingMatrix {
        let width = self
            .column_labels
            .iter()
            .take_while(|l| l.kind == ObservableKind::Z)
            .count();
        EmbeddingMatrix {
            record_ids: self.record_ids.clone(),
            values: self.values.columns(0, width).into_owned(),
            column_labels: self.column_labels[..width].to_vec(),
            mode: EmbeddingMode::OneBody,
        }
    }

    /// CSV with `id` first, then one column per label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.column_labels.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (r, id) in self.record_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.values.row(r).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar carrying everything needed to regenerate the matrix.
    pub fn write_sidecar(&self, path: &Path, config: &ReservoirConfig, scaler: &FeatureScaler) -> Result<()> {
        let doc = EmbeddingSidecar {
            format: SIDECAR_FORMAT.into(),
            mode: self.mode,
            n_records: self.record_ids.len(),
            width: self.column_labels.len(),
            snapshot_times: config.snapshot_times(),
            reservoir: config.clone(),
            scaler: scaler.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

pub const SIDECAR_FORMAT: &str = "qrc-embedding/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub format: String,
    pub mode: EmbeddingMode,
    pub n_records: usize,
    pub width: usize,
    pub snapshot_times: Vec<f64>,
    pub reservoir: ReservoirConfig,
    pub scaler: FeatureScaler,
}

/// Embeds every row of `features`. Rows are processed on a pool of
/// `workers` threads (0 = rayon default); each row is an independent
/// computation, so the result does not depend on the worker count.
pub fn embed_features(
    config: &ReservoirConfig,
    scaler: &FeatureScaler,
    features: &Matrix,
    mode: EmbeddingMode,
    workers: usize,
) -> Result<Matrix> {
    config.validate()?;
    let n_atoms = config.n_atoms();
    if features.ncols() != n_atoms || scaler.arity() != n_atoms {
        return Err(Error::DimensionMismatch {
            what: "feature count vs atom count",
            expected: n_atoms,
            got: if features.ncols() != n_atoms { features.ncols() } else { scaler.arity() },
        });
    }
    let width = mode.width(n_atoms, config.snapshot_times().len());
    let job = || -> Result<Vec<Vec<f64>>> {
        (0..features.nrows())
            .into_par_iter()
            .map(|r| {
                let row: Vec<f64> = features.row(r).iter().copied().collect();
                embed_record(config, &encode(scaler, &row)?, mode)
            })
            .collect()
    };
    let rows = if workers == 0 {
        job()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(job)?
    };
    let mut values = Matrix::zeros(rows.len(), width);
    for (r, row) in rows.iter().enumerate() {
        values.row_mut(r).iter_mut().zip(row).for_each(|(v, x)| *v = *x);
    }
    Ok(values)
}

pub fn embed_dataset(
    config: &ReservoirConfig,
    scaler: &FeatureScaler,
    dataset: &MolecularDataset,
    mode: EmbeddingMode,
    workers: usize,
) -> Result<EmbeddingMatrix> {
    let values = embed_features(config, scaler, &dataset.features, mode, workers)?;
    Ok(EmbeddingMatrix {
        record_ids: dataset.record_ids.clone(),
        values,
        column_labels: column_labels(config.n_atoms(), &config.snapshot_times(), mode),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scaler_examples() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 6.0, 1.0]);
        let s = fit_scaler(&m).unwrap();
        assert_eq!((s.mins[0], s.maxs[0]), (2.0, 6.0));
        assert_eq!(s.degenerate_mask, [false, true]);
        assert_eq!(encode(&s, &[2.0, 1.0]).unwrap().values(), &[-1.0, 0.0]);
        assert_eq!(encode(&s, &[6.0, 7.0]).unwrap().values(), &[1.0, 0.0]);
        assert_eq!(encode(&s, &[60.0, 1.0]).unwrap().values()[0], 1.0);
        assert!(fit_scaler(&Matrix::zeros(0, 2)).is_err());
        assert!(encode(&s, &[1.0]).is_err());
    }

    #[test]
    fn encode_midpoint_arithmetic() {
        let s = FeatureScaler {
            mins: vec![0.0],
            maxs: vec![10.0],
            degenerate_mask: vec![false],
        };
        assert!((encode(&s, &[2.5]).unwrap().values()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn widths_at_eighteen_atoms() {
        assert_eq!(EmbeddingMode::OneBody.width(18, 11), 198);
        assert_eq!(EmbeddingMode::TwoBody.width(18, 11), 1881);
        let labels = column_labels(18, &ReservoirConfig::chain(18).snapshot_times(), EmbeddingMode::TwoBody);
        assert_eq!(labels.len(), 1881);
        let names: std::collections::HashSet<String> = labels.iter().map(ToString::to_string).collect();
        assert_eq!(names.len(), 1881);
    }

    #[test]
    fn undriven_embedding_is_all_ones() {
        let cfg = ReservoirConfig {
            rabi_amplitude: 0.0,
            ..ReservoirConfig::chain(3)
        };
        let v = embed_record(&cfg, &DetuningPattern::new(vec![0.2, -0.2, 1.0]).unwrap(), EmbeddingMode::TwoBody).unwrap();
        assert_eq!(v.len(), 66);
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn one_body_is_prefix_of_two_body() {
        let cfg = ReservoirConfig::chain(4);
        let p = DetuningPattern::new(vec![0.3, -0.9, 0.1, 0.6]).unwrap();
        let one = embed_record(&cfg, &p, EmbeddingMode::OneBody).unwrap();
        let two = embed_record(&cfg, &p, EmbeddingMode::TwoBody).unwrap();
        assert_eq!(one.len(), 44);
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-12);
        }
        let labels = column_labels(4, &cfg.snapshot_times(), EmbeddingMode::TwoBody);
        assert_eq!(labels[11].to_string(), "Z_1@0.4");
        assert_eq!(labels[44].to_string(), "ZZ_0_1@0.4");
    }

    #[test]
    fn dataset_embedding_rows_and_workers() {
        let cfg = ReservoirConfig::chain(3);
        let features = Matrix::from_row_slice(4, 3, &[0.1, 0.5, -0.3, 1.0, 0.0, 0.2, 0.1, 0.5, -0.3, -1.0, 0.7, 0.9]);
        let ds = MolecularDataset::new(
            (0..4).map(|i| format!("m{i}")).collect(),
            features,
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0; 4],
        )
        .unwrap();
        let scaler = fit_scaler(&ds.features).unwrap();
        let e1 = embed_dataset(&cfg, &scaler, &ds, EmbeddingMode::TwoBody, 1).unwrap();
        let e8 = embed_dataset(&cfg, &scaler, &ds, EmbeddingMode::TwoBody, 8).unwrap();
        assert!((&e1.values - &e8.values).amax() < 1e-12);
        assert_eq!(e1.values.row(0), e1.values.row(2));
        let row1: Vec<f64> = ds.features.row(1).iter().copied().collect();
        let direct = embed_record(&cfg, &encode(&scaler, &row1).unwrap(), EmbeddingMode::TwoBody).unwrap();
        assert_eq!(e1.values.row(1).iter().copied().collect::<Vec<_>>(), direct);
        assert!(e1.values.iter().all(|v| (-1.0..=1.0).contains(v)));

        let one = e1.to_one_body();
        assert_eq!(one.values.ncols(), 33);
        assert_eq!(one.mode, EmbeddingMode::OneBody);

        let wrong = ds.select_features(&[0, 1]);
        assert!(embed_dataset(&cfg, &scaler, &wrong, EmbeddingMode::OneBody, 1).is_err());
    }

    #[test]
    fn csv_and_sidecar() {
        let cfg = ReservoirConfig {
            total_time: 0.8,
            ..ReservoirConfig::chain(2)
        };
        let ds = MolecularDataset::new(
            vec!["x".into(), "y".into()],
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            vec!["a".into(), "b".into()],
            vec![0.0; 2],
        )
        .unwrap();
        let scaler = fit_scaler(&ds.features).unwrap();
        let e = embed_dataset(&cfg, &scaler, &ds, EmbeddingMode::TwoBody, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.write_csv(&dir.path().join("e.csv")).unwrap();
        e.write_sidecar(&dir.path().join("e.json"), &cfg, &scaler).unwrap();
        let text = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
        assert!(text.starts_with("id,Z_0@0.4,Z_0@0.8,Z_1@0.4,Z_1@0.8,ZZ_0_1@0.4,ZZ_0_1@0.8\n"));
        let side: EmbeddingSidecar = serde_json::from_str(&std::fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
        assert_eq!(side.scaler, scaler);
        assert_eq!(side.width, 6);
    }

    proptest! {
        #[test]
        fn encoding_is_monotone(a in -50f64..50.0, b in -50f64..50.0) {
            let s = FeatureScaler { mins: vec![-10.0], maxs: vec![20.0], degenerate_mask: vec![false] };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fl = encode(&s, &[lo]).unwrap().values()[0];
            let fh = encode(&s, &[hi]).unwrap().values()[0];
            prop_assert!(fl <= fh);
        }
    }
}
