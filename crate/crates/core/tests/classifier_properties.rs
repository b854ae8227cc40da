mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{random_spd, rng};
use spd_rp::classifier::{
    argmax_smallest, evaluate_accuracy, hinge_objective, knn_stein, train_binary, train_ova_svm, ClassifierError,
    LabeledVector, SvmParams, TrainedClassifier,
};

/// Three Gaussian blobs in 4 dimensions, well separated.
fn blobs(seed: u64, per_class: usize) -> Vec<LabeledVector> {
    let mut r = rng(seed);
    let centers = [[4.0, 0.0, 0.0, 1.0], [0.0, 4.0, 0.0, -1.0], [0.0, 0.0, 4.0, 0.0]];
    let mut out = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let coords = c.iter().map(|&m| m + r.random_range(-0.5..0.5)).collect();
            out.push(LabeledVector::new(coords, label));
        }
    }
    out
}

fn params(seed: u64) -> SvmParams {
    SvmParams {
        lambda: 1e-3,
        epochs: 40,
        seed,
    }
}

fn transform(data: &[LabeledVector], scale: &[f64], shift: &[f64]) -> Vec<LabeledVector> {
    data.iter()
        .map(|v| {
            let coords = v.coords.iter().zip(scale).zip(shift).map(|((x, a), b)| a * x + b).collect();
            LabeledVector::new(coords, v.label)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn power_of_two_rescaling_is_bit_exact(seed in any::<u64>(), e in prop::collection::vec(-6i32..6, 4)) {
        let train = blobs(seed, 15);
        let test = blobs(seed ^ 1, 10);
        let scale: Vec<f64> = e.iter().map(|&k| 2f64.powi(k)).collect();
        let zero = vec![0.0; 4];
        let a = train_ova_svm(&train, &params(seed)).unwrap();
        let b = train_ova_svm(&transform(&train, &scale, &zero), &params(seed)).unwrap();
        let scaled_test = transform(&test, &scale, &zero);
        for (u, v) in test.iter().zip(&scaled_test) {
            let pa = a.predict(&u.coords).unwrap();
            let pb = b.predict(&v.coords).unwrap();
            prop_assert_eq!(pa.label, pb.label);
            prop_assert!(pa.scores.iter().zip(&pb.scores).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn affine_rescaling_keeps_predictions(seed in any::<u64>(), s in prop::collection::vec(0.01f64..100.0, 4), b in prop::collection::vec(-50.0f64..50.0, 4)) {
        let train = blobs(seed, 15);
        let test = blobs(seed ^ 2, 10);
        let a = train_ova_svm(&train, &params(seed)).unwrap();
        let t = train_ova_svm(&transform(&train, &s, &b), &params(seed)).unwrap();
        for (u, v) in test.iter().zip(transform(&test, &s, &b)) {
            let pa = a.predict(&u.coords).unwrap();
            let pt = t.predict(&v.coords).unwrap();
            prop_assert_eq!(pa.label, pt.label);
            for (x, y) in pa.scores.iter().zip(&pt.scores) {
                prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact(seed in any::<u64>()) {
        let clf = train_ova_svm(&blobs(seed, 8), &params(seed)).unwrap();
        let back = TrainedClassifier::from_text(&clf.to_text().unwrap()).unwrap();
        prop_assert_eq!(&back, &clf);
    }

    #[test]
    fn argmax_prefers_smallest_index(scores in prop::collection::vec(-3i32..3, 1..8)) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let best = argmax_smallest(&s);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s[best], max);
        prop_assert!(s[..best].iter().all(|&v| v < max));
    }
}

#[test]
fn separable_blobs_are_learned() {
    let clf = train_ova_svm(&blobs(1, 20), &params(1)).unwrap();
    let e = evaluate_accuracy(&clf, &blobs(2, 30)).unwrap();
    assert_eq!(e.accuracy, 1.0);
    assert_eq!(e.total, 90);
    assert_eq!(e.confusion, vec![vec![30, 0, 0], vec![0, 30, 0], vec![0, 0, 30]]);
}

#[test]
fn recorded_objectives_never_increase() {
    let data = blobs(3, 20);
    let xs: Vec<Vec<f64>> = data.iter().map(|v| v.coords.clone()).collect();
    let ys: Vec<f64> = data.iter().map(|v| if v.label == 1 { 1.0 } else { -1.0 }).collect();
    let svm = train_binary(&xs, &ys, &params(5), 0);
    assert_eq!(svm.epoch_objectives.len(), 40);
    assert!(svm.epoch_objectives.windows(2).all(|w| w[1] <= w[0]));
    let last = *svm.epoch_objectives.last().unwrap();
    assert_eq!(hinge_objective(&xs, &ys, &svm.weights, svm.bias, 1e-3), last);
}

#[test]
fn knn_tie_rules() {
    let mut r = rng(4);
    let a = random_spd(&mut r, 3, 1.0);
    let b = random_spd(&mut r, 3, 1.0);
    // Two equidistant neighbours with different labels: the vote ties and the smaller label wins.
    let train = vec![(a.clone(), 2), (a.clone(), 1), (b.clone(), 0)];
    assert_eq!(knn_stein(&train, &a, 2).unwrap(), 1);
    assert_eq!(knn_stein(&train, &a, 1).unwrap(), 2);
    assert_eq!(knn_stein(&train, &b, 1).unwrap(), 0);
    assert!(matches!(knn_stein(&train, &a, 0), Err(ClassifierError::InvalidParams(_))));
    assert!(matches!(knn_stein(&[], &a, 1), Err(ClassifierError::EmptyTrain)));
}

#[test]
fn training_errors() {
    let one_class: Vec<LabeledVector> = (0..4).map(|i| LabeledVector::new(vec![i as f64], 0)).collect();
    assert!(matches!(train_ova_svm(&one_class, &params(0)), Err(ClassifierError::SingleClass)));
    let gap = vec![LabeledVector::new(vec![0.0], 0), LabeledVector::new(vec![1.0], 2)];
    assert!(matches!(train_ova_svm(&gap, &params(0)), Err(ClassifierError::MissingClass(1))));
    let ragged = vec![LabeledVector::new(vec![0.0], 0), LabeledVector::new(vec![1.0, 2.0], 1)];
    assert!(matches!(train_ova_svm(&ragged, &params(0)), Err(ClassifierError::DimensionMismatch { .. })));
    let nan = vec![LabeledVector::new(vec![0.0], 0), LabeledVector::new(vec![f64::NAN], 1)];
    assert!(matches!(train_ova_svm(&nan, &params(0)), Err(ClassifierError::NonFinite(1))));
    let bad = SvmParams { lambda: 0.0, ..params(0) };
    assert!(matches!(train_ova_svm(&blobs(1, 3), &bad), Err(ClassifierError::InvalidParams(_))));
    let clf = train_ova_svm(&blobs(1, 3), &params(0)).unwrap();
    assert!(clf.predict(&[1.0]).is_err());
}
