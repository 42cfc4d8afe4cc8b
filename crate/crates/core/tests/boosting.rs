use geoseer_core::boosting::{best_split, leaf_weight, load_model, save_model, sigmoid, Trainer};
use geoseer_core::metrics::auroc;
use geoseer_core::synth::separable_rows;
use geoseer_core::{train, BoostParams, Error, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    probabilities: Vec<f64>,
}

fn reference() -> Reference {
    serde_json::from_str(include_str!("fixtures/xgb_reference.json")).unwrap()
}

fn reference_params() -> BoostParams {
    BoostParams {
        rounds: 10,
        learning_rate: 0.1,
        max_depth: 3,
        reg_lambda: 1.0,
        gamma: 0.0,
        min_child_weight: 1.0,
        seed: 0,
    }
}

#[test]
fn matches_xgboost_exact_greedy() {
    let r = reference();
    assert_eq!(r.features.len(), 50);
    let labels: Vec<bool> = r.labels.iter().map(|&l| l == 1).collect();
    let model = train(&r.features, &labels, &reference_params()).unwrap();
    let worst = r
        .features
        .iter()
        .zip(&r.probabilities)
        .map(|(x, p)| (model.predict_proba(x).unwrap() - p).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "max |p - p_ref| = {worst:e}");
}

#[test]
fn predictions_invariant_under_row_permutation() {
    let r = reference();
    let labels: Vec<bool> = r.labels.iter().map(|&l| l == 1).collect();
    let model = train(&r.features, &labels, &reference_params()).unwrap();

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.reverse();
    order.rotate_left(17);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| r.features[i].clone()).collect();
    let shuffled_labels: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
    let permuted = train(&rows, &shuffled_labels, &reference_params()).unwrap();

    assert_eq!(model.to_json().unwrap(), permuted.to_json().unwrap());
}

#[test]
fn logloss_nonincreasing_on_fixtures() {
    let r = reference();
    let labels: Vec<bool> = r.labels.iter().map(|&l| l == 1).collect();
    let (_, trace) = Trainer::new(BoostParams::default())
        .fit_traced(&r.features, &labels)
        .unwrap();
    assert_eq!(trace.len(), 101);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));

    let (rows, labels) = separable_rows(200, 8, 5);
    let (_, trace) = Trainer::new(BoostParams::default()).fit_traced(&rows, &labels).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn trees_respect_depth_and_feature_bounds() {
    let (rows, labels) = separable_rows(300, 12, 9);
    for depth in [0, 1, 2, 3, 5] {
        let params = BoostParams {
            rounds: 5,
            max_depth: depth,
            ..BoostParams::default()
        };
        let model = train(&rows, &labels, &params).unwrap();
        assert!(model.trees.iter().all(|t| t.depth() <= depth));
        assert_eq!(model.trees.len(), 5);
    }
}

#[test]
fn accepted_splits_have_positive_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = BoostParams {
        min_child_weight: 0.0,
        ..BoostParams::default()
    };
    for _ in 0..50 {
        let n = rng.random_range(2..30);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(0..4) as f64).collect())
            .collect();
        let grads: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hess: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
        if let Some(s) = best_split(&rows, &grads, &hess, &params) {
            assert!(s.gain > 0.0);
            let left = rows.iter().filter(|r| r[s.feature] < s.threshold).count();
            assert!(left > 0 && left < n);
            // children gradient sums partition the node
            let g: f64 = grads.iter().sum();
            assert!((s.left.grad + s.right.grad - g).abs() < 1e-9);
        }
    }
}

#[test]
fn save_load_round_trip() {
    let (rows, labels) = separable_rows(120, 6, 21);
    let model = train(&rows, &labels, &BoostParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    save_model(&model, &a).unwrap();
    save_model(&model, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let loaded = load_model(&a).unwrap();
    assert_eq!(loaded, model);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        assert_eq!(
            loaded.predict_raw(&x).unwrap().to_bits(),
            model.predict_raw(&x).unwrap().to_bits()
        );
    }
    assert!(matches!(loaded.predict_proba(&[0.0; 5]), Err(Error::FeatureDim { .. })));
}

#[test]
fn retraining_gives_identical_bytes() {
    let (rows, labels) = separable_rows(150, 10, 2);
    let a = train(&rows, &labels, &BoostParams::default()).unwrap();
    let b = train(&rows, &labels, &BoostParams::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn unknown_version_rejected() {
    let text = r#"{"format_version":7,"feature_dim":1,"base_raw_score":0.0,"params":{},"trees":[]}"#;
    assert!(matches!(
        Model::from_json(text),
        Err(Error::ModelVersion { found: 7, .. })
    ));
    assert!(matches!(Model::from_json("not json"), Err(Error::CorruptModel(_))));
}

#[test]
fn probabilities_stay_open_interval() {
    let (rows, labels) = separable_rows(100, 3, 8);
    let params = BoostParams {
        rounds: 300,
        learning_rate: 1.0,
        ..BoostParams::default()
    };
    let model = train(&rows, &labels, &params).unwrap();
    for r in &rows {
        let p = model.predict_proba(r).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    assert!(auroc(&labels, &model.predict_proba_batch(&rows).unwrap()).unwrap() > 0.99);
}

#[test]
fn analytic_chain_single_round() {
    assert!((leaf_weight(-2.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((sigmoid(0.1) - 0.524_979_187_478_939_8).abs() < 1e-15);
}
