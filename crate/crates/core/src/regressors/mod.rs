//! Regression model suite used both for the classical baseline and as the
//! trained readout on reservoir embeddings.

mod gp;
mod knn;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

pub use gp::GpParams;
pub use knn::KnnParams;
pub use linear::LinearParams;
pub use tree::{Node, Tree, TreeParams};

pub const MODEL_FORMAT: &str = "qrc-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Linear,
    Knn,
    Cart,
    RandomForest,
    GpRbf,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 5] = [
        RegressorKind::Linear,
        RegressorKind::Knn,
        RegressorKind::Cart,
        RegressorKind::RandomForest,
        RegressorKind::GpRbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Linear => "linear",
            RegressorKind::Knn => "knn",
            RegressorKind::Cart => "cart",
            RegressorKind::RandomForest => "random_forest",
            RegressorKind::GpRbf => "gp_rbf",
        }
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model kind plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Linear {
        /// Ridge term added for conditioning.
        ridge: f64,
    },
    Knn {
        k: usize,
    },
    Cart {
        max_depth: Option<usize>,
        min_leaf: usize,
    },
    RandomForest {
        n_trees: usize,
        /// Features tried per split; `None` means `ceil(sqrt(d))`.
        max_features: Option<usize>,
        min_leaf: usize,
        max_depth: Option<usize>,
        bootstrap: bool,
    },
    GpRbf {
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
    },
}

impl RegressorSpec {
    pub fn default_for(kind: RegressorKind) -> Self {
        match kind {
            RegressorKind::Linear => RegressorSpec::Linear { ridge: 1e-8 },
            RegressorKind::Knn => RegressorSpec::Knn { k: 5 },
            RegressorKind::Cart => RegressorSpec::Cart {
                max_depth: None,
                min_leaf: 2,
            },
            RegressorKind::RandomForest => RegressorSpec::RandomForest {
                n_trees: 100,
                max_features: None,
                min_leaf: 2,
                max_depth: None,
                bootstrap: true,
            },
            RegressorKind::GpRbf => RegressorSpec::GpRbf {
                length_scale: 1.0,
                signal_variance: 1.0,
                noise_variance: 1e-2,
            },
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressorSpec::Linear { .. } => RegressorKind::Linear,
            RegressorSpec::Knn { .. } => RegressorKind::Knn,
            RegressorSpec::Cart { .. } => RegressorKind::Cart,
            RegressorSpec::RandomForest { .. } => RegressorKind::RandomForest,
            RegressorSpec::GpRbf { .. } => RegressorKind::GpRbf,
        }
    }

    fn validate(&self, n_train: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            RegressorSpec::Linear { ridge } if !(ridge >= 0.0) => bad(format!("ridge {ridge} < 0")),
            RegressorSpec::Knn { k } if k == 0 || k > n_train => {
                bad(format!("knn k = {k} must lie in 1..={n_train}"))
            }
            RegressorSpec::Cart { min_leaf, max_depth } if min_leaf == 0 || max_depth == Some(0) => {
                bad("cart min_leaf and max_depth must be positive".into())
            }
            RegressorSpec::RandomForest {
                n_trees,
                max_features,
                min_leaf,
                max_depth,
                ..
            } if n_trees == 0 || min_leaf == 0 || max_features == Some(0) || max_depth == Some(0) => {
                bad("random forest hyperparameters must be positive".into())
            }
            RegressorSpec::GpRbf {
                length_scale,
                signal_variance,
                noise_variance,
            } if !(length_scale > 0.0 && signal_variance > 0.0 && noise_variance >= 0.0) => {
                bad("gp_rbf needs length_scale > 0, signal_variance > 0, noise_variance >= 0".into())
            }
            _ => Ok(()),
        }
    }
}

/// Fitted parameters, one variant per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Linear(LinearParams),
    Knn(KnnParams),
    Cart(Tree),
    RandomForest { trees: Vec<Tree> },
    GpRbf(GpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: RegressorSpec,
    pub n_train: usize,
    pub n_features: usize,
    pub seed: u64,
    pub params: FittedParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    model: TrainedModel,
}

impl TrainedModel {
    pub fn kind(&self) -> RegressorKind {
        self.spec.kind()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        predict(self, x)
    }

    /// Self-describing JSON document tagged with [`MODEL_FORMAT`].
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.into(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format {:?}",
                doc.format
            )));
        }
        Ok(doc.model)
    }
}

/// Anything that maps a feature matrix to one prediction per row.
pub trait Predict: Sync {
    fn n_features(&self) -> usize;
    fn predict_rows(&self, x: &Matrix) -> Vec<f64>;
}

impl Predict for TrainedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_rows(&self, x: &Matrix) -> Vec<f64> {
        match &self.params {
            FittedParams::Linear(p) => p.predict(x),
            FittedParams::Knn(p) => p.predict(x),
            FittedParams::Cart(t) => t.predict(x),
            FittedParams::RandomForest { trees } => tree::forest_predict(trees, x),
            FittedParams::GpRbf(p) => p.predict(x),
        }
    }
}

pub fn train(spec: &RegressorSpec, x: &Matrix, y: &[f64], seed: u64) -> Result<TrainedModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "target length",
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training target"));
    }
    spec.validate(n)?;
    let params = match *spec {
        RegressorSpec::Linear { ridge } => FittedParams::Linear(LinearParams::fit(x, y, ridge)),
        RegressorSpec::Knn { k } => FittedParams::Knn(KnnParams::fit(x, y, k)),
        RegressorSpec::Cart { max_depth, min_leaf } => FittedParams::Cart(Tree::fit(
            x,
            y,
            &TreeParams {
                max_depth,
                min_leaf,
                max_features: x.ncols(),
            },
            None,
        )),
        RegressorSpec::RandomForest {
            n_trees,
            max_features,
            min_leaf,
            max_depth,
            bootstrap,
        } => {
            let d = x.ncols();
            let mtry = max_features
                .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
                .clamp(1, d);
            FittedParams::RandomForest {
                trees: tree::fit_forest(
                    x,
                    y,
                    n_trees,
                    bootstrap,
                    &TreeParams {
                        max_depth,
                        min_leaf,
                        max_features: mtry,
                    },
                    seed,
                ),
            }
        }
        RegressorSpec::GpRbf {
            length_scale,
            signal_variance,
            noise_variance,
        } => FittedParams::GpRbf(GpParams::fit(x, y, length_scale, signal_variance, noise_variance)?),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        n_train: n,
        n_features: x.ncols(),
        seed,
        params,
    })
}

pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            what: "prediction arity",
            expected: model.n_features,
            got: x.ncols(),
        });
    }
    let out = model.predict_rows(x);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predictions"));
    }
    Ok(out)
}

/// Mean squared error.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "mse operand length",
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("mse operands"));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(sum / predictions.len() as f64)
}

pub(crate) fn sq_dist(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> (Matrix, Vec<f64>) {
        let x = Matrix::from_fn(n, 1, |i, _| i as f64 * 0.37 - 1.0);
        let y = x.iter().map(|v| 2.0 * v).collect();
        (x, y)
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mse(&[0.5, 7.0], &[1.0, 3.0]).unwrap(), mse(&[1.0, 3.0], &[0.5, 7.0]).unwrap());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn linear_recovers_slope() {
        let (x, y) = line(20);
        let m = train(&RegressorSpec::default_for(RegressorKind::Linear), &x, &y, 0).unwrap();
        let FittedParams::Linear(p) = &m.params else { unreachable!() };
        assert!((p.weights[0] - 2.0).abs() < 1e-8);
        assert!(p.intercept.abs() < 1e-8);
    }

    #[test]
    fn constant_target_every_kind() {
        let x = Matrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = vec![4.25; 12];
        let probe = Matrix::from_fn(4, 3, |i, j| i as f64 - j as f64 * 0.5);
        for kind in RegressorKind::ALL {
            let m = train(&RegressorSpec::default_for(kind), &x, &y, 1).unwrap();
            for p in m.predict(&probe).unwrap() {
                assert!((p - 4.25).abs() < 1e-8, "{kind}: {p}");
            }
        }
    }

    #[test]
    fn forest_is_deterministic_under_seed() {
        let x = Matrix::from_fn(40, 4, |i, j| ((i * 13 + j * 7) % 11) as f64);
        let y: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let spec = RegressorSpec::default_for(RegressorKind::RandomForest);
        let a = train(&spec, &x, &y, 5).unwrap().predict(&x).unwrap();
        let b = train(&spec, &x, &y, 5).unwrap().predict(&x).unwrap();
        let c = train(&spec, &x, &y, 6).unwrap().predict(&x).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn knn_self_prediction() {
        let x = Matrix::from_fn(6, 2, |i, j| (i * 3 + j) as f64);
        let y = vec![1.0, -2.0, 3.5, 0.0, 9.0, 4.0];
        let m = train(&RegressorSpec::Knn { k: 1 }, &x, &y, 0).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
        assert!(train(&RegressorSpec::Knn { k: 7 }, &x, &y, 0).is_err());
    }

    #[test]
    fn gp_interpolates_with_tiny_noise() {
        let x = Matrix::from_fn(6, 2, |i, j| i as f64 * 0.8 + j as f64 * 0.3);
        let y = vec![0.3, -1.0, 2.0, 0.7, 0.0, -0.4];
        let spec = RegressorSpec::GpRbf {
            length_scale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-10,
        };
        let m = train(&spec, &x, &y, 0).unwrap();
        for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn errors() {
        let (x, y) = line(5);
        let spec = RegressorSpec::default_for(RegressorKind::Linear);
        assert!(matches!(train(&spec, &x, &y[..4], 0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            train(&spec, &x.rows(0, 1).into_owned(), &y[..1], 0),
            Err(Error::TooFewRecords { .. })
        ));
        let mut bad = y.clone();
        bad[2] = f64::NAN;
        assert!(matches!(train(&spec, &x, &bad, 0), Err(Error::NonFinite(_))));
        let m = train(&spec, &x, &y, 0).unwrap();
        assert!(matches!(m.predict(&Matrix::zeros(2, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn json_document_round_trip() {
        let x = Matrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        for kind in RegressorKind::ALL {
            let m = train(&RegressorSpec::default_for(kind), &x, &y, 3).unwrap();
            let text = m.to_json().unwrap();
            assert!(text.contains(MODEL_FORMAT));
            let back = TrainedModel::from_json(&text).unwrap();
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
        assert!(TrainedModel::from_json(r#"{"format":"other/9","model":null}"#).is_err());
    }
}
