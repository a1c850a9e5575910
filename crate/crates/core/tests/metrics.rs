use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torsonet::data::{ImageSample, SampleSource};
use torsonet::graph::{ModelConfig, ModelGraph};
use torsonet::ops::activation::relu;
use torsonet::train::{
    evaluate, f1_score, metrics_from_confusion, write_history_jsonl, write_metrics_jsonl, ConfusionMatrix,
    EpochRecord, History,
};
use torsonet::{Error, Tensor};

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("k{i}")).collect()
}

fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
    let k = counts.len();
    ConfusionMatrix::from_counts(counts, names(k)).unwrap()
}

/// Confusion matrix whose per-class precision and recall are exactly
/// (0.85, 0.77), (0.94, 0.96), (0.50, 0.55) and (0.92, 0.90).
pub const RELU_REFERENCE_COUNTS: [[u64; 4]; 4] = [
    [1309, 0, 385, 6],
    [158, 4512, 0, 30],
    [27, 288, 385, 0],
    [46, 0, 0, 414],
];

#[test]
fn f1_of_single_precision_recall_pairs() {
    let a = f1_score(0.85, 0.77);
    assert!((a - 0.808).abs() < 5e-4, "{a}");
    let b = f1_score(0.94, 0.96);
    assert!((b - 0.949).abs() < 1e-3, "{b}");
    assert_eq!((b * 100.0).round() / 100.0, 0.95);
    assert_eq!(f1_score(0.0, 0.0), 0.0);
    assert_eq!(f1_score(1.0, 1.0), 1.0);
}

#[test]
fn hand_counted_two_class_matrix() {
    let r = metrics_from_confusion(&cm(vec![vec![3, 1], vec![2, 4]])).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-3;
    assert!(close(r.classes[0].precision, 0.6) && close(r.classes[1].precision, 0.8));
    assert!(close(r.classes[0].recall, 0.75) && close(r.classes[1].recall, 0.667));
    assert_eq!(r.accuracy, 0.7);
    assert_eq!((r.classes[0].support, r.classes[1].support, r.samples), (4, 6, 10));
}

#[test]
fn identity_counts_are_perfect() {
    let mut counts = vec![vec![0; 4]; 4];
    for (k, row) in counts.iter_mut().enumerate() {
        row[k] = 5 + k as u64;
    }
    let r = metrics_from_confusion(&cm(counts)).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.macro_f1, 1.0);
    assert!(r.classes.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
}

#[test]
fn reference_relu_f1_column_is_reproduced() {
    let want_pr = [(0.85, 0.77), (0.94, 0.96), (0.50, 0.55), (0.92, 0.90)];
    let want_f1 = [0.81, 0.95, 0.52, 0.91];
    for scale in [1, 3] {
        let counts = RELU_REFERENCE_COUNTS
            .iter()
            .map(|r| r.iter().map(|v| v * scale).collect())
            .collect();
        let r = metrics_from_confusion(&cm(counts)).unwrap();
        for ((c, (p, rec)), f1) in r.classes.iter().zip(want_pr).zip(want_f1) {
            assert!((c.precision - p).abs() < 1e-12 && (c.recall - rec).abs() < 1e-12);
            assert!((c.f1 - f1).abs() <= 0.005, "{} vs {f1}", c.f1);
        }
    }
}

#[test]
fn out_of_range_records_and_empty_matrices_fail() {
    let mut m = ConfusionMatrix::new(names(3));
    assert!(matches!(m.record(3, 0), Err(Error::Data(_))));
    assert!(matches!(metrics_from_confusion(&m), Err(Error::Argument(_))));
    m.record(1, 2).unwrap();
    assert_eq!(m.total(), 1);
    assert!(ConfusionMatrix::from_counts(vec![vec![1, 2]], names(1)).is_err());
}

fn matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..6).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..50, k), k))
}

proptest! {
    #[test]
    fn metrics_stay_in_bounds(counts in matrix()) {
        prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
        let m = cm(counts);
        let r = metrics_from_confusion(&m).unwrap();
        prop_assert_eq!(r.samples, m.total());
        prop_assert!((r.accuracy - m.trace() as f64 / m.total() as f64).abs() < 1e-15);
        for c in &r.classes {
            prop_assert!((0.0..=1.0).contains(&c.precision));
            prop_assert!((0.0..=1.0).contains(&c.recall));
            prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
            prop_assert!((c.f1 - f1_score(c.precision, c.recall)).abs() < 1e-15);
        }
        let mean = r.classes.iter().map(|c| c.f1).sum::<f64>() / r.classes.len() as f64;
        prop_assert!((r.macro_f1 - mean).abs() < 1e-12);
    }

    #[test]
    fn relabeling_permutes_metrics(counts in matrix(), seed in any::<u64>()) {
        prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
        let k = counts.len();
        let mut perm: Vec<usize> = (0..k).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        // Class i of the original becomes class perm[i].
        let mut moved = vec![vec![0; k]; k];
        for i in 0..k {
            for j in 0..k {
                moved[perm[i]][perm[j]] = counts[i][j];
            }
        }
        let a = metrics_from_confusion(&cm(counts)).unwrap();
        let b = metrics_from_confusion(&cm(moved)).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        for i in 0..k {
            let (x, y) = (&a.classes[i], &b.classes[perm[i]]);
            prop_assert_eq!((x.precision, x.recall, x.f1, x.support), (y.precision, y.recall, y.f1, y.support));
        }
    }
}

#[test]
fn uniform_random_predictor_scores_one_over_k() {
    for k in [2usize, 4, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let mut m = ConfusionMatrix::new(names(k));
        for i in 0..10_000 {
            m.record(i % k, rng.random_range(0..k)).unwrap();
        }
        let r = metrics_from_confusion(&m).unwrap();
        let target = 1.0 / k as f64;
        assert!((r.macro_f1 - target).abs() < 0.05, "k={k}: {}", r.macro_f1);
    }
}

fn small_set(n: usize, side: usize) -> Vec<ImageSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..n)
        .map(|i| ImageSample {
            pixels: Tensor::from_vec(&[side, side, 1], (0..side * side).map(|_| rng.random()).collect()).unwrap(),
            label: i % 3,
        })
        .collect()
}

#[test]
fn evaluate_is_pure_and_counts_argmax_hits() {
    let m = ModelGraph::<f32>::build(&ModelConfig::new(3, relu()).with_input_side(32).with_seed(1)).unwrap();
    let data = small_set(12, 32);
    let before: Vec<Vec<f32>> = m.param_blocks().iter().map(|(_, w, b)| [*w, *b].concat()).collect();
    let (cm1, r1) = evaluate(&m, &data).unwrap();
    let (cm2, r2) = evaluate(&m, &data).unwrap();
    let after: Vec<Vec<f32>> = m.param_blocks().iter().map(|(_, w, b)| [*w, *b].concat()).collect();
    assert_eq!(before, after);
    assert_eq!(cm1, cm2);
    assert_eq!(r1, r2);
    assert_eq!(cm1.total(), 12);

    let hits = data
        .iter()
        .filter(|s| m.infer(&s.pixels).unwrap().argmax() == s.label)
        .count();
    assert_eq!(r1.accuracy, hits as f64 / 12.0);
}

#[test]
fn evaluate_rejects_bad_inputs() {
    let m = ModelGraph::<f32>::build(&ModelConfig::new(3, relu()).with_input_side(32)).unwrap();
    let empty: Vec<ImageSample> = Vec::new();
    assert!(matches!(evaluate(&m, &empty), Err(Error::Argument(_))));
    let mut data = small_set(2, 32);
    data[1].label = 3;
    assert!(matches!(evaluate(&m, &data), Err(Error::Data(_))));
    assert_eq!(data.as_slice().len(), SampleSource::len(&data));
}

#[test]
fn argmax_ties_go_to_the_lowest_index() {
    let t = Tensor::from_vec(&[4], vec![0.1f32, 0.4, 0.4, 0.1]).unwrap();
    assert_eq!(t.argmax(), 1);
}

#[test]
fn jsonl_records_follow_the_schema() {
    let history = History {
        epochs: vec![
            EpochRecord { epoch: 1, train_loss: 1.25, train_acc: 0.5, val_acc: Some(0.75), seconds: 2.0 },
            EpochRecord { epoch: 2, train_loss: 0.5, train_acc: 0.9, val_acc: None, seconds: 2.5 },
        ],
    };
    let mut out = Vec::new();
    write_history_jsonl(&history, &mut out).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["epoch"], 1);
    assert_eq!(lines[0]["train_loss"], 1.25);
    assert_eq!(lines[0]["val_acc"], 0.75);
    assert!(lines[1]["val_acc"].is_null());
    assert_eq!(lines[1]["seconds"], 2.5);

    let r = metrics_from_confusion(&cm(vec![vec![3, 1], vec![2, 4]])).unwrap();
    let mut out = Vec::new();
    write_metrics_jsonl(&r, "val", &mut out).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["kind"], "class");
    assert_eq!(lines[0]["split"], "val");
    assert_eq!(lines[0]["class"], "k0");
    assert_eq!(lines[0]["precision"], 0.6);
    assert_eq!(lines[1]["support"], 6);
    assert_eq!(lines[2]["kind"], "overall");
    assert_eq!(lines[2]["accuracy"], 0.7);
    assert_eq!(lines[2]["samples"], 10);
}

#[test]
fn report_prints_metric_rows_with_classes_as_columns() {
    let r = metrics_from_confusion(&cm(vec![vec![3, 1], vec![2, 4]])).unwrap();
    let text = r.to_string();
    let first: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(first, ["Metric", "k0", "k1"]);
    assert!(text.contains("Precision"));
    assert!(text.contains("F1-score"));
    assert!(text.contains("Accuracy  70.00%"));
}
