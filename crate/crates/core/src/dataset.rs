//! Molecular descriptor tables: CSV ingestion, cleaning, summary statistics,
//! standardization, splitting, and a synthetic generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::stream_rng;
use crate::{Error, Matrix, Result};

/// Tokens treated as a missing value in CSV cells.
const MISSING_TOKENS: &[&str] = &["", "na", "nan", "n/a", "null", "none", "?"];

/// Records × descriptors with a real-valued activity target.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularDataset {
    pub record_ids: Vec<String>,
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub target: Vec<f64>,
    /// Per-feature count of values that were imputed during loading.
    pub imputed_counts: Vec<usize>,
}

impl MolecularDataset {
    pub fn new(
        record_ids: Vec<String>,
        features: Matrix,
        feature_names: Vec<String>,
        target: Vec<f64>,
    ) -> Result<Self> {
        let n_features = features.ncols();
        let ds = Self {
            record_ids,
            features,
            feature_names,
            target,
            imputed_counts: vec![0; n_features],
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if self.target.len() != n {
            return Err(Error::DimensionMismatch {
                what: "target length",
                expected: n,
                got: self.target.len(),
            });
        }
        if self.record_ids.len() != n {
            return Err(Error::DimensionMismatch {
                what: "record id count",
                expected: n,
                got: self.record_ids.len(),
            });
        }
        if self.feature_names.len() != self.features.ncols() {
            return Err(Error::DimensionMismatch {
                what: "feature name count",
                expected: self.features.ncols(),
                got: self.feature_names.len(),
            });
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target"));
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            record_ids: indices.iter().map(|&i| self.record_ids[i].clone()).collect(),
            features: self.features.select_rows(indices),
            feature_names: self.feature_names.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            imputed_counts: self.imputed_counts.clone(),
        }
    }

    /// Feature columns at `indices`, in the given order.
    pub fn select_features(&self, indices: &[usize]) -> Self {
        Self {
            record_ids: self.record_ids.clone(),
            features: self.features.select_columns(indices),
            feature_names: indices
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            target: self.target.clone(),
            imputed_counts: indices.iter().map(|&j| self.imputed_counts[j]).collect(),
        }
    }

    /// Writes the dataset in the same layout [`load_csv`] reads.
    pub fn write_csv(&self, path: &Path, schema: &CsvSchema) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![schema.id_column.clone(), schema.target_column.clone()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_records() {
            let mut row = Vec::with_capacity(header.len());
            row.push(self.record_ids[r].clone());
            row.push(format!("{}", self.target[r]));
            row.extend(self.features.row(r).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column roles in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub id_column: String,
    pub target_column: String,
    /// When set, only columns whose header starts with this prefix are features.
    pub feature_prefix: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "MOLECULE".into(),
            target_column: "Act".into(),
            feature_prefix: None,
        }
    }
}

fn is_unnamed(header: &str) -> bool {
    let h = header.trim();
    h.is_empty() || h.starts_with("Unnamed:")
}

fn parse_cell(cell: &str) -> Option<Option<f64>> {
    let t = cell.trim();
    if MISSING_TOKENS.contains(&t.to_ascii_lowercase().as_str()) {
        return Some(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Some(v)),
        Ok(_) => Some(None),
        Err(_) => None,
    }
}

/// Loads a descriptor CSV.
///
/// Unnamed columns (empty header or pandas' `Unnamed: N`) are dropped.
/// Missing feature cells are imputed with the mean of the observed values in
/// that column (0 when a column has no observed values); rows with a missing
/// target are dropped. Lines starting with `#` are comments. Row numbers in
/// errors count data rows from 1.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<MolecularDataset> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let id_col = headers.iter().position(|h| h.trim() == schema.id_column);
    let target_col = headers
        .iter()
        .position(|h| h.trim() == schema.target_column)
        .ok_or_else(|| {
            Error::InvalidConfig(format!("target column {:?} not found", schema.target_column))
        })?;
    let feature_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|&(i, h)| {
            Some(i) != id_col
                && i != target_col
                && !is_unnamed(h)
                && schema
                    .feature_prefix
                    .as_deref()
                    .is_none_or(|p| h.trim().starts_with(p))
        })
        .map(|(i, _)| i)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::NoFeatureColumns);
    }

    let mut ids = Vec::new();
    let mut target = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let y = parse_cell(&record[target_col]).ok_or_else(|| Error::MalformedRow {
            row,
            reason: format!("target {:?} is not a number", &record[target_col]),
        })?;
        let Some(y) = y else {
            continue;
        };
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v = parse_cell(&record[c]).ok_or_else(|| Error::MalformedRow {
                row,
                reason: format!("column {:?} value {:?} is not a number", &headers[c], &record[c]),
            })?;
            values.push(v);
        }
        ids.push(match id_col {
            Some(c) => record[c].trim().to_string(),
            None => format!("row{row}"),
        });
        target.push(y);
        cells.push(values);
    }

    let n = cells.len();
    let d = feature_cols.len();
    let mut imputed_counts = vec![0usize; d];
    let mut features = Matrix::zeros(n, d);
    for j in 0..d {
        let observed: Vec<f64> = cells.iter().filter_map(|row| row[j]).collect();
        let fill = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        for (i, row) in cells.iter().enumerate() {
            features[(i, j)] = match row[j] {
                Some(v) => v,
                None => {
                    imputed_counts[j] += 1;
                    fill
                }
            };
        }
    }

    Ok(MolecularDataset {
        record_ids: ids,
        features,
        feature_names: feature_cols.iter().map(|&c| headers[c].trim().to_string()).collect(),
        target,
        imputed_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub missing_count: usize,
    pub min: f64,
    pub max: f64,
    /// Sample skewness `m3 / m2^1.5`; 0 for constant features.
    pub skew: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`; undefined for constant features.
    pub kurtosis: Option<f64>,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_records: usize,
    pub n_features: usize,
    pub features: Vec<FeatureSummary>,
}

/// Per-feature exploratory statistics (moment estimators, population form).
pub fn summarize(dataset: &MolecularDataset) -> DataSummary {
    let n = dataset.n_records();
    let features = (0..dataset.n_features())
        .map(|j| {
            let col = dataset.features.column(j);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = col.iter().sum::<f64>() / n as f64;
            let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
            for &v in col.iter() {
                let d = v - mean;
                let d2 = d * d;
                m2 += d2;
                m3 += d2 * d;
                m4 += d2 * d2;
            }
            m2 /= n as f64;
            m3 /= n as f64;
            m4 /= n as f64;
            let constant = min == max || m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2);
            let (skew, kurtosis) = if constant {
                (0.0, None)
            } else {
                (m3 / m2.powf(1.5), Some(m4 / (m2 * m2) - 3.0))
            };
            FeatureSummary {
                name: dataset.feature_names[j].clone(),
                missing_count: dataset.imputed_counts.get(j).copied().unwrap_or(0),
                min,
                max,
                skew,
                kurtosis,
                constant,
            }
        })
        .collect();
    DataSummary {
        n_records: n,
        n_features: dataset.n_features(),
        features,
    }
}

/// Column-wise z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub constant_mask: Vec<bool>,
}

impl StandardizationParams {
    pub fn fit(dataset: &MolecularDataset) -> Result<Self> {
        let n = dataset.n_records();
        if n < 2 {
            return Err(Error::TooFewRecords { needed: 2, got: n });
        }
        let d = dataset.n_features();
        let mut means = Vec::with_capacity(d);
        let mut stddevs = Vec::with_capacity(d);
        let mut constant_mask = Vec::with_capacity(d);
        for j in 0..d {
            let col = dataset.features.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            stddevs.push(sd);
            constant_mask.push(sd <= 1e-12 * mean.abs().max(1.0));
        }
        Ok(Self {
            feature_names: dataset.feature_names.clone(),
            means,
            stddevs,
            constant_mask,
        })
    }

    pub fn transform_value(&self, j: usize, x: f64) -> f64 {
        if self.constant_mask[j] {
            0.0
        } else {
            (x - self.means[j]) / self.stddevs[j]
        }
    }

    /// Inverse map `z * sd + mean`.
    pub fn inverse(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        for j in 0..out.ncols() {
            for v in out.column_mut(j).iter_mut() {
                *v = *v * self.stddevs[j] + self.means[j];
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fits z-score parameters on `dataset` and applies them to it. The target
/// is left untouched; constant columns become all zeros.
pub fn standardize(dataset: &MolecularDataset) -> Result<(MolecularDataset, StandardizationParams)> {
    let params = StandardizationParams::fit(dataset)?;
    let out = apply_standardization(&params, dataset)?;
    Ok((out, params))
}

pub fn apply_standardization(
    params: &StandardizationParams,
    dataset: &MolecularDataset,
) -> Result<MolecularDataset> {
    if params.feature_names != dataset.feature_names {
        return Err(Error::FeatureNameMismatch);
    }
    let mut out = dataset.clone();
    for j in 0..out.n_features() {
        for v in out.features.column_mut(j).iter_mut() {
            *v = params.transform_value(j, *v);
        }
    }
    Ok(out)
}

/// Train/test index partition. Both lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Set when stratification was requested but could not be honoured.
    pub fallback: Option<String>,
}

/// Largest-remainder apportionment of `total` over `weights`; ties go to the
/// lower index.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    // Integer arithmetic keeps the remainders exact.
    let mut alloc: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let remainders: Vec<usize> = weights.iter().map(|&w| total * w % sum).collect();
    let mut left = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    alloc
}

/// Number of test records for `n` records at `test_fraction`, kept inside
/// `1..n` so both sides are non-empty.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Seeded partition of `0..n`.
///
/// With `strata`, the test size is apportioned to strata by largest
/// remainder. Strata with fewer than two records cannot appear on both sides;
/// in that case the split falls back to the global pool and records why in
/// [`SplitIndices::fallback`].
pub fn split_indices(
    n: usize,
    test_fraction: f64,
    strata: Option<&[usize]>,
    seed: u64,
) -> Result<SplitIndices> {
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let n_test = test_count(n, test_fraction);
    let mut rng = stream_rng(seed, 0);

    let mut fallback = None;
    if let Some(strata) = strata {
        if strata.len() != n {
            return Err(Error::DimensionMismatch {
                what: "strata length",
                expected: n,
                got: strata.len(),
            });
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &s) in strata.iter().enumerate() {
            groups.entry(s).or_default().push(i);
        }
        let small: Vec<usize> = groups
            .iter()
            .filter(|(_, m)| m.len() < 2)
            .map(|(&s, _)| s)
            .collect();
        if small.is_empty() {
            let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
            let alloc = largest_remainder(n_test, &sizes);
            let mut test = Vec::with_capacity(n_test);
            let mut train = Vec::with_capacity(n - n_test);
            for (members, k) in groups.into_values().zip(alloc) {
                let mut members = members;
                members.shuffle(&mut rng);
                test.extend_from_slice(&members[..k]);
                train.extend_from_slice(&members[k..]);
            }
            test.sort_unstable();
            train.sort_unstable();
            return Ok(SplitIndices {
                train,
                test,
                fallback: None,
            });
        }
        fallback = Some(format!(
            "strata {small:?} have fewer than 2 records; split drawn from the global pool"
        ));
    }

    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let mut test = all[..n_test].to_vec();
    let mut train = all[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices {
        train,
        test,
        fallback,
    })
}

pub fn train_test_split(
    dataset: &MolecularDataset,
    test_fraction: f64,
    strata: Option<&[usize]>,
    seed: u64,
) -> Result<(MolecularDataset, MolecularDataset)> {
    let split = split_indices(dataset.n_records(), test_fraction, strata, seed)?;
    Ok((dataset.select_rows(&split.train), dataset.select_rows(&split.test)))
}

/// Target-generating relation for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Linear,
    Nonlinear,
}

/// Weights of the linear relation: `w_j = (-1)^j (j + 1) / d`.
pub fn linear_weights(n_features: usize) -> Vec<f64> {
    (0..n_features)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (j + 1) as f64 / n_features as f64
        })
        .collect()
}

/// Intercept of the linear relation.
pub const LINEAR_INTERCEPT: f64 = 0.5;

/// Noise-free nonlinear target. Feature `j` contributes
/// `2 sin(2x)`, `x^2`, `2|x|` or `tanh(3x)` for `j mod 4 = 0, 1, 2, 3`, plus
/// an `x_0 x_1` interaction when there are at least two features.
pub fn nonlinear_target(x: &[f64]) -> f64 {
    let mut y: f64 = x
        .iter()
        .enumerate()
        .map(|(j, &v)| match j % 4 {
            0 => 2.0 * (2.0 * v).sin(),
            1 => v * v,
            2 => 2.0 * v.abs(),
            _ => (3.0 * v).tanh(),
        })
        .sum();
    if x.len() >= 2 {
        y += x[0] * x[1];
    }
    y
}

/// Synthetic descriptor table: features i.i.d. standard normal, target from
/// `relation` plus Gaussian noise of standard deviation `noise_sd`.
/// Features and noise use separate random streams, so changing `noise_sd`
/// leaves the feature matrix unchanged.
pub fn generate_synthetic(
    n_records: usize,
    n_features: usize,
    relation: Relation,
    noise_sd: f64,
    seed: u64,
) -> Result<MolecularDataset> {
    if n_records < 4 {
        return Err(Error::TooFewRecords {
            needed: 4,
            got: n_records,
        });
    }
    if n_features < 1 {
        return Err(Error::InvalidConfig("n_features must be at least 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise_sd {noise_sd} invalid")));
    }
    let mut feat_rng = stream_rng(seed, 0);
    let mut noise_rng = stream_rng(seed, 1);
    let mut features = Matrix::zeros(n_records, n_features);
    for i in 0..n_records {
        for j in 0..n_features {
            features[(i, j)] = StandardNormal.sample(&mut feat_rng);
        }
    }
    let weights = linear_weights(n_features);
    let target = (0..n_records)
        .map(|i| {
            let row: Vec<f64> = features.row(i).iter().copied().collect();
            let clean = match relation {
                Relation::Linear => {
                    LINEAR_INTERCEPT + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>()
                }
                Relation::Nonlinear => nonlinear_target(&row),
            };
            let eps: f64 = StandardNormal.sample(&mut noise_rng);
            clean + noise_sd * eps
        })
        .collect();
    MolecularDataset::new(
        (0..n_records).map(|i| format!("SYN{i:05}")).collect(),
        features,
        (0..n_features).map(|j| format!("D_{}", j + 1)).collect(),
        target,
    )
}
