mod oracle;

use qrc_core::feature_select::explain_rows;
use qrc_core::regressors::Predict;
use qrc_core::{kernel_shap, rank_features, select_top_k, Matrix, ShapConfig};
use rand::Rng;

struct Fn<F: std::ops::Fn(&[f64]) -> f64 + Sync> {
    d: usize,
    f: F,
}

impl<F: std::ops::Fn(&[f64]) -> f64 + Sync> Predict for Fn<F> {
    fn n_features(&self) -> usize {
        self.d
    }
    fn predict_rows(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| (self.f)(&r.iter().copied().collect::<Vec<_>>())).collect()
    }
}

#[test]
fn linear_models_match_exhaustive_shapley() {
    let mut rng = qrc_core::seed::stream_rng(1, 0);
    for d in 1..=8 {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let f = |z: &[f64]| b + z.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
        let model = Fn { d, f };
        let bg: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = kernel_shap(&model, &x, &ShapConfig::new(Matrix::from_row_slice(1, d, &bg), 4)).unwrap();
        let exact = oracle::exact_shapley(&f, &x, &bg);
        for j in 0..d {
            assert!((a.phi[j] - exact[j]).abs() < 1e-3);
        }
        assert!(a.efficiency_residual() < 1e-6);
    }
}

#[test]
fn nonlinear_model_matches_oracle_when_enumerated() {
    let f = |z: &[f64]| z[0] * z[1] + (z[2] * 2.0).sin() - z[3].abs() * z[4] + z[5].powi(2);
    let model = Fn { d: 6, f };
    let bg = [0.5, -0.2, 0.1, 1.0, 0.3, -0.7];
    let x = [1.2, 0.7, -0.4, -1.1, 2.0, 0.9];
    let a = kernel_shap(&model, &x, &ShapConfig::new(Matrix::from_row_slice(1, 6, &bg), 0)).unwrap();
    assert!(a.exact);
    let exact = oracle::exact_shapley(&f, &x, &bg);
    for j in 0..6 {
        assert!((a.phi[j] - exact[j]).abs() < 1e-6, "{j}: {} vs {}", a.phi[j], exact[j]);
    }
}

#[test]
fn symmetric_features_get_equal_credit() {
    let f = |z: &[f64]| (z[0] + z[1]).tanh() + 0.1 * z[2];
    let model = Fn { d: 3, f };
    let a = kernel_shap(&model, &[1.0, 1.0, 0.5], &ShapConfig::new(Matrix::zeros(1, 3), 0)).unwrap();
    assert!((a.phi[0] - a.phi[1]).abs() < 1e-9);
}

#[test]
fn sampled_explanations_are_efficient() {
    let d = 14;
    let f = |z: &[f64]| z.iter().enumerate().map(|(j, v)| ((j + 1) as f64 * v).sin()).sum::<f64>() + z[0] * z[3];
    let model = Fn { d, f };
    let mut rng = qrc_core::seed::stream_rng(2, 0);
    let bg = Matrix::from_fn(5, d, |_, _| rng.random_range(-1.0..1.0));
    let x = Matrix::from_fn(6, d, |_, _| rng.random_range(-1.0..1.0));
    let mut cfg = ShapConfig::new(bg, 7);
    cfg.n_coalitions = 400;
    let attrs = explain_rows(&model, &x, &cfg).unwrap();
    assert!(attrs.iter().all(|a| !a.exact && a.efficiency_residual() < 1e-6));
    assert_eq!(attrs, explain_rows(&model, &x, &cfg).unwrap());
    let ranking = rank_features(&attrs).unwrap();
    assert_eq!(select_top_k(&ranking, 3).unwrap().len(), 3);
}
