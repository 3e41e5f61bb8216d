//! 2D projection, median-cut binary labels, SVM classification and metrics.
//!
//! PCA is the built-in projector. Nonlinear projections such as UMAP are
//! left to external tools, fed through [`export_for_projection`].

mod metrics;
mod pca;
mod svm;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{classification_metrics, ClassificationMetrics};
pub use pca::{pca_project, Projection2D};
pub use svm::{svm_train, SvmKernel, SvmModel, SvmParams};

use crate::{Error, Matrix, Result};

/// Parameters recorded in the export header for external UMAP runs.
pub const UMAP_HEADER: &str = "# umap: n_neighbors=200 min_dist=0.9 metric=minkowski";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLabels {
    pub labels: Vec<u8>,
    pub threshold: f64,
    /// Set when one of the two classes is empty.
    pub degenerate: bool,
}

impl BinaryLabels {
    /// Class 1 for values strictly above `threshold`.
    pub fn with_threshold(target: &[f64], threshold: f64) -> Self {
        let labels: Vec<u8> = target.iter().map(|&t| u8::from(t > threshold)).collect();
        let ones = labels.iter().filter(|&&l| l == 1).count();
        BinaryLabels {
            degenerate: ones == 0 || ones == labels.len(),
            labels,
            threshold,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let labels: Vec<u8> = indices.iter().map(|&i| self.labels[i]).collect();
        let ones = labels.iter().filter(|&&l| l == 1).count();
        BinaryLabels {
            degenerate: ones == 0 || ones == labels.len(),
            labels,
            threshold: self.threshold,
        }
    }
}

/// Splits at the sample median; values equal to the median go to class 0.
pub fn median_binarize(target: &[f64]) -> Result<BinaryLabels> {
    if target.is_empty() {
        return Err(Error::Empty("target"));
    }
    if target.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("target"));
    }
    let mut sorted = target.to_vec();
    let threshold = svm::median(&mut sorted);
    Ok(BinaryLabels::with_threshold(target, threshold))
}

/// Writes `id[,target],x_1..x_d` preceded by a comment line carrying the
/// UMAP parameters. Values use shortest round-trip formatting.
pub fn export_for_projection(x: &Matrix, ids: &[String], target: Option<&[f64]>, path: &Path) -> Result<()> {
    if ids.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "export ids",
            expected: x.nrows(),
            got: ids.len(),
        });
    }
    if let Some(t) = target {
        if t.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "export target",
                expected: x.nrows(),
                got: t.len(),
            });
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{UMAP_HEADER}")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["id".to_string()];
    if target.is_some() {
        header.push("target".into());
    }
    header.extend((1..=x.ncols()).map(|j| format!("x_{j}")));
    w.write_record(&header)?;
    for r in 0..x.nrows() {
        let mut row = vec![ids[r].clone()];
        if let Some(t) = target {
            row.push(format!("{}", t[r]));
        }
        row.extend(x.row(r).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_csv, CsvSchema};

    #[test]
    fn median_examples() {
        let b = median_binarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.threshold, 2.5);
        assert_eq!(b.labels, [0, 0, 1, 1]);
        assert!(!b.degenerate);
        let b = median_binarize(&[3.0; 5]).unwrap();
        assert_eq!(b.labels, [0; 5]);
        assert!(b.degenerate);
        let b = median_binarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.labels, [0, 0, 1]);
    }

    #[test]
    fn median_is_order_free() {
        let t = [0.3, -1.0, 4.0, 2.2, 0.0, 7.5];
        let perm = [3, 0, 5, 1, 4, 2];
        let a = median_binarize(&t).unwrap();
        let shuffled: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let b = median_binarize(&shuffled).unwrap();
        assert_eq!(a.threshold, b.threshold);
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b.labels[k], a.labels[i]);
        }
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proj.csv");
        let x = Matrix::from_row_slice(2, 3, &[0.1, -2.5e-7, 3.0, 1.0 / 3.0, 42.0, -0.0]);
        let ids = vec!["a".to_string(), "b".to_string()];
        export_for_projection(&x, &ids, Some(&[1.0, 2.0]), &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        export_for_projection(&x, &ids, Some(&[1.0, 2.0]), &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());

        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with(UMAP_HEADER));
        assert_eq!(text.lines().count(), 4);

        let schema = CsvSchema {
            id_column: "id".into(),
            target_column: "target".into(),
            feature_prefix: Some("x_".into()),
        };
        let ds = load_csv(&path, &schema).unwrap();
        assert_eq!(ds.record_ids, ids);
        assert!((ds.features.clone() - &x).amax() < 1e-12);

        export_for_projection(&x, &ids, None, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 4);
    }
}
