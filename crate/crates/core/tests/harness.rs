use std::collections::BTreeMap;

use proptest::prelude::*;
use semturn_core::harness::{
    compare_reports, compute_metrics, majority_predictions, mean_metrics, significance, write_projection_csv,
    write_weights_csv, ExperimentReport, Metrics, ProjectionRow, SeedResult,
};

fn oracle_f1(labels: &[usize], preds: &[usize], class: usize) -> f64 {
    let tp = labels.iter().zip(preds).filter(|(l, p)| **l == class && **p == class).count() as f64;
    let predicted = preds.iter().filter(|p| **p == class).count() as f64;
    let actual = labels.iter().filter(|l| **l == class).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / predicted;
    let recall = tp / actual;
    100.0 * 2.0 * precision * recall / (precision + recall)
}

fn pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0usize..2, n), prop::collection::vec(0usize..2, n)))
}

fn report(id: &str, preds: &[(u64, Vec<u8>)], labels: Vec<u8>) -> ExperimentReport {
    let seeds: Vec<SeedResult> = preds
        .iter()
        .map(|(seed, p)| SeedResult {
            seed: *seed,
            metrics: compute_metrics(
                &labels.iter().map(|l| *l as usize).collect::<Vec<_>>(),
                &p.iter().map(|x| *x as usize).collect::<Vec<_>>(),
            )
            .unwrap(),
            best_epoch: 1,
            val_macro_f1: 50.0,
            history: Vec::new(),
            modality_weights: None,
            predictions: p.clone(),
        })
        .collect();
    let mean = mean_metrics(&seeds.iter().map(|s| s.metrics).collect::<Vec<_>>());
    ExperimentReport {
        id: id.into(),
        config: serde_json::json!({"id": id}),
        seeds,
        mean_metrics: mean,
        modality_weights: Some(BTreeMap::from([("text".to_string(), 1.0)])),
        significance: None,
        test_keys: (0..labels.len()).map(|i| format!("s/{i}")).collect(),
        test_labels: labels,
        threads: 1,
    }
}

proptest! {
    #[test]
    fn metrics_agree_with_direct_counting((labels, preds) in pairs()) {
        let m = compute_metrics(&labels, &preds).unwrap();
        let correct = labels.iter().zip(&preds).filter(|(l, p)| l == p).count() as f64;
        prop_assert!((m.accuracy - 100.0 * correct / labels.len() as f64).abs() < 1e-9);
        prop_assert!((m.f1_hold - oracle_f1(&labels, &preds, 0)).abs() < 1e-9);
        prop_assert!((m.f1_yield - oracle_f1(&labels, &preds, 1)).abs() < 1e-9);
        prop_assert!((m.macro_f1 - (m.f1_hold + m.f1_yield) / 2.0).abs() < 1e-12);
        prop_assert_eq!(m.total() as usize, labels.len());
        for (t, row) in m.confusion.iter().enumerate() {
            for (p, c) in row.iter().enumerate() {
                let n = labels.iter().zip(&preds).filter(|(l, q)| **l == t && **q == p).count();
                prop_assert_eq!(*c as usize, n);
            }
        }
    }

    #[test]
    fn p_value_is_bounded_by_its_floor((labels, a) in pairs(), seed in 0u64..100, iterations in 1usize..200) {
        let b: Vec<usize> = a.iter().rev().copied().collect();
        let p = significance(&a, &b, &labels, iterations, seed).unwrap();
        prop_assert!(p >= 1.0 / (iterations + 1) as f64 - 1e-12);
        prop_assert!(p <= 1.0);
        prop_assert_eq!(p, significance(&a, &b, &labels, iterations, seed).unwrap());
        prop_assert_eq!(significance(&a, &a, &labels, iterations, seed).unwrap(), 1.0);
    }

    #[test]
    fn mean_of_identical_metrics_is_unchanged((labels, preds) in pairs(), k in 1usize..5) {
        let m = compute_metrics(&labels, &preds).unwrap();
        let mean = mean_metrics(&vec![m; k]);
        prop_assert!((mean.macro_f1 - m.macro_f1).abs() < 1e-9);
        prop_assert!((mean.accuracy - m.accuracy).abs() < 1e-9);
    }
}

#[test]
fn mean_of_hand_set_metrics() {
    let a = Metrics::from_confusion([[6.0, 0.0], [0.0, 4.0]]);
    let b = Metrics::from_confusion([[6.0, 0.0], [4.0, 0.0]]);
    assert_eq!(a.macro_f1, 100.0);
    assert!((b.f1_hold - 75.0).abs() < 1e-12);
    assert_eq!(b.f1_yield, 0.0);
    let m = mean_metrics(&[a, b]);
    assert!((m.accuracy - 80.0).abs() < 1e-12);
    assert!((m.f1_hold - 87.5).abs() < 1e-12);
    assert!((m.f1_yield - 50.0).abs() < 1e-12);
    assert!((m.macro_f1 - 68.75).abs() < 1e-12);
    assert_eq!(m.confusion, [[6.0, 0.0], [2.0, 2.0]]);
}

#[test]
fn majority_baseline_predicts_hold_everywhere() {
    let labels = [0, 0, 0, 1, 1];
    let m = compute_metrics(&labels, &majority_predictions(labels.len())).unwrap();
    assert!((m.accuracy - 60.0).abs() < 1e-12);
    assert!((m.f1_hold - 75.0).abs() < 1e-12);
    assert_eq!(m.f1_yield, 0.0);
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(compute_metrics(&[0, 1], &[0]).is_err());
    assert!(significance(&[0, 1], &[0], &[0, 1], 10, 0).is_err());
    assert!(compute_metrics(&[0, 2], &[0, 1]).is_err());
}

#[test]
fn report_round_trips_through_json() {
    let r = report("a", &[(0, vec![0, 1, 1]), (1, vec![0, 0, 1])], vec![0, 1, 1]);
    let back = ExperimentReport::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert!(ExperimentReport::from_json("{\"id\": 1}").is_err());
}

#[test]
fn comparison_pools_only_shared_seeds() {
    let labels = vec![0, 1, 1, 0];
    let a = report("a", &[(0, vec![0, 1, 1, 0]), (1, vec![0, 1, 1, 0]), (2, vec![1, 1, 1, 1])], labels.clone());
    let b = report("b", &[(1, vec![1, 0, 0, 1]), (0, vec![1, 0, 0, 1])], labels.clone());
    let (pa, pb, l) = a.pooled_against(&b).unwrap();
    assert_eq!(l.len(), 8);
    assert_eq!(pa, vec![0, 1, 1, 0, 0, 1, 1, 0]);
    assert_eq!(pb, vec![1, 0, 0, 1, 1, 0, 0, 1]);
    let sig = compare_reports(&a, &b, 99, 3).unwrap();
    assert_eq!(sig.baseline_id, "b");
    assert!(sig.p_value < 0.05, "{}", sig.p_value);

    let other = report("c", &[(0, vec![0, 1, 1])], vec![0, 1, 1]);
    assert!(a.pooled_against(&other).is_err());
    let disjoint = report("d", &[(7, vec![0, 1, 1, 0])], labels);
    assert!(a.pooled_against(&disjoint).is_err());
}

#[test]
fn csv_writers_emit_headers_and_rows() {
    let mut buf = Vec::new();
    let rows = vec![
        ProjectionRow { x: 0.5, y: -1.0, gtype: "iconic".into() },
        ProjectionRow { x: 0.0, y: 2.0, gtype: "none".into() },
    ];
    write_projection_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,type"));
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("iconic"));

    let mut buf = Vec::new();
    let w = BTreeMap::from([("audio".to_string(), 0.25), ("text".to_string(), 0.75)]);
    write_weights_csv(&w, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "modality,weight\naudio,0.25\ntext,0.75\n");
}
