mod oracle;

use nalgebra::DVector;
use qrc_core::dataset::{linear_weights, LINEAR_INTERCEPT};
use qrc_core::regressors::{FittedParams, Predict};
use qrc_core::{generate_synthetic, mse, train, Matrix, Relation, RegressorSpec};
use rand::Rng;

#[test]
fn noiseless_linear_data_recovers_weights() {
    let ds = generate_synthetic(200, 6, Relation::Linear, 0.0, 3).unwrap();
    let model = train(&RegressorSpec::Linear { ridge: 0.0 }, &ds.features, &ds.target, 0).unwrap();
    let FittedParams::Linear(p) = &model.params else { panic!() };
    assert!((p.intercept - LINEAR_INTERCEPT).abs() < 1e-8);
    for (w, e) in p.weights.iter().zip(linear_weights(6)) {
        assert!((w - e).abs() < 1e-8);
    }
}

#[test]
fn linear_residuals_are_orthogonal_to_design() {
    let ds = generate_synthetic(150, 5, Relation::Nonlinear, 0.3, 9).unwrap();
    let model = train(&RegressorSpec::Linear { ridge: 0.0 }, &ds.features, &ds.target, 0).unwrap();
    let pred = model.predict(&ds.features).unwrap();
    let r = DVector::from_iterator(150, ds.target.iter().zip(&pred).map(|(y, p)| y - p));
    let xt_r = ds.features.transpose() * &r;
    assert!(xt_r.norm() < 1e-6, "{}", xt_r.norm());
    assert!(r.sum().abs() < 1e-6);
}

#[test]
fn forest_beats_linear_on_nonlinear_data() {
    let ds = generate_synthetic(1000, 4, Relation::Nonlinear, 0.1, 5).unwrap();
    let train_idx: Vec<usize> = (0..800).collect();
    let test_idx: Vec<usize> = (800..1000).collect();
    let (tr, te) = (ds.select_rows(&train_idx), ds.select_rows(&test_idx));
    let score = |spec: &RegressorSpec| {
        let m = train(spec, &tr.features, &tr.target, 1).unwrap();
        mse(&m.predict(&te.features).unwrap(), &te.target).unwrap()
    };
    let forest = score(&RegressorSpec::default_for(qrc_core::RegressorKind::RandomForest));
    let linear = score(&RegressorSpec::default_for(qrc_core::RegressorKind::Linear));
    assert!(forest < linear, "forest {forest} linear {linear}");
}

#[test]
fn single_tree_forest_equals_cart() {
    let mut rng = qrc_core::seed::stream_rng(77, 0);
    for case in 0..50 {
        let n = rng.random_range(5..40);
        let d = rng.random_range(1..5);
        let x = Matrix::from_fn(n, d, |_, _| (rng.random_range(0..8) as f64) * 0.5);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let min_leaf = rng.random_range(1..4);
        let cart = train(&RegressorSpec::Cart { max_depth: None, min_leaf }, &x, &y, 0).unwrap();
        let forest = train(
            &RegressorSpec::RandomForest {
                n_trees: 1,
                max_features: Some(d),
                min_leaf,
                max_depth: None,
                bootstrap: false,
            },
            &x,
            &y,
            case,
        )
        .unwrap();
        let (FittedParams::Cart(a), FittedParams::RandomForest { trees }) = (&cart.params, &forest.params) else {
            panic!()
        };
        assert_eq!(a, &trees[0], "case {case}");
        assert_eq!(cart.predict_rows(&x), forest.predict_rows(&x));
    }
}

#[test]
fn gp_matches_dense_posterior_and_interpolates() {
    let mut rng = qrc_core::seed::stream_rng(8, 0);
    let n = 30;
    let x = Matrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
    let y: Vec<f64> = (0..n).map(|i| (x[(i, 0)] * 1.3).sin() + x[(i, 1)].powi(2)).collect();
    let (ell, s2, noise) = (0.8, 1.5, 1e-10);
    let model = train(
        &RegressorSpec::GpRbf {
            length_scale: ell,
            signal_variance: s2,
            noise_variance: noise,
        },
        &x,
        &y,
        0,
    )
    .unwrap();
    let k = |a: usize, b: &[f64]| {
        let d2: f64 = (0..2).map(|j| (x[(a, j)] - b[j]).powi(2)).sum();
        s2 * (-d2 / (2.0 * ell * ell)).exp()
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    let gram = Matrix::from_fn(n, n, |i, j| k(i, &[x[(j, 0)], x[(j, 1)]]) + if i == j { noise } else { 0.0 });
    let alpha = gram.lu().solve(&DVector::from_iterator(n, y.iter().map(|v| v - mean))).unwrap();
    let queries = Matrix::from_fn(10, 2, |_, _| rng.random_range(-2.0..2.0));
    let ours = model.predict(&queries).unwrap();
    for q in 0..10 {
        let p = [queries[(q, 0)], queries[(q, 1)]];
        let expected = mean + (0..n).map(|i| alpha[i] * k(i, &p)).sum::<f64>();
        assert!((ours[q] - expected).abs() < 1e-5);
    }
    let fitted = model.predict(&x).unwrap();
    for (a, b) in fitted.iter().zip(&y) {
        assert!((a - b).abs() < 1e-6);
    }
}
