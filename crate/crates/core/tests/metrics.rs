mod common;

use dvit_core::metrics::{
    cohen_kappa, confusion, kid, macro_f1, macro_precision, macro_recall, mean_accuracy, mmd2_unbiased,
    overall_accuracy, poly_kernel, ConfusionMatrix, KidConfig, MetricsReport,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
    ConfusionMatrix::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn confusion_counts() {
    let m = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
    assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    let m = confusion(&[0], &[1], 2).unwrap();
    assert_eq!(m.counts[0][1], 1);
    assert!(confusion(&[0, 3], &[0, 1], 3).is_err());
    assert!(confusion(&[0], &[0, 1], 3).is_err());
}

#[test]
fn confusion_matches_per_sample_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let truth: Vec<usize> = (0..200).map(|_| rng.random_range(0..5)).collect();
    let pred: Vec<usize> = (0..200).map(|_| rng.random_range(0..5)).collect();
    let m = confusion(&truth, &pred, 5).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let n = truth.iter().zip(&pred).filter(|&(&t, &p)| t == i && p == j).count() as u64;
            assert_eq!(m.counts[i][j], n);
        }
        let tp = m.tp(i);
        assert_eq!(m.tp(i) + m.fn_(i) + m.fp(i) + m.tn(i), 200);
        assert_eq!(tp + m.fn_(i), truth.iter().filter(|&&t| t == i).count() as u64);
    }
    let mut rev_t = truth.clone();
    let mut rev_p = pred.clone();
    rev_t.reverse();
    rev_p.reverse();
    assert_eq!(confusion(&rev_t, &rev_p, 5).unwrap(), m);
}

#[test]
fn hand_computed_values() {
    assert_eq!(overall_accuracy(&cm(&[&[3, 2], &[1, 4]])).unwrap(), 0.7);
    let m = cm(&[&[20, 5], &[10, 15]]);
    assert_eq!(overall_accuracy(&m).unwrap(), 0.7);
    assert!(close(cohen_kappa(&m).unwrap(), 0.4, 1e-15));
    let m = cm(&[&[8, 2], &[4, 6]]);
    assert!(close(mean_accuracy(&m).unwrap(), 0.7, 1e-15));
    assert!(close(macro_precision(&m), (2.0 / 3.0 + 0.75) / 2.0, 1e-15));
    assert!(close(macro_recall(&m), 0.7, 1e-15));
    assert!(close(macro_f1(&m), 0.6970, 5e-5));
    let f1 = dvit_core::metrics::f1_per_class(&m);
    assert!(close(f1[0].0, 0.7273, 5e-5) && close(f1[1].0, 0.6667, 5e-5));
    let imb = cm(&[&[90, 10], &[0, 10]]);
    assert!(close(mean_accuracy(&imb).unwrap(), 0.95, 1e-15));
    assert!(close(overall_accuracy(&imb).unwrap(), 100.0 / 110.0, 1e-15));
}

#[test]
fn diagonal_is_perfect() {
    let m = cm(&[&[4, 0, 0], &[0, 2, 0], &[0, 0, 9]]);
    for v in [
        overall_accuracy(&m).unwrap(),
        mean_accuracy(&m).unwrap(),
        cohen_kappa(&m).unwrap(),
        macro_precision(&m),
        macro_recall(&m),
        macro_f1(&m),
    ] {
        assert_eq!(v, 1.0);
    }
}

#[test]
fn kappa_calibration() {
    // outer product of marginals: observed agreement equals chance
    let m = cm(&[&[6, 4], &[9, 6]]);
    assert!(close(cohen_kappa(&m).unwrap(), 0.0, 1e-15));
    let m = cm(&[&[2, 3, 5], &[4, 6, 10], &[6, 9, 15]]);
    assert!(close(cohen_kappa(&m).unwrap(), 0.0, 1e-15));
    assert!(cohen_kappa(&cm(&[&[0, 5], &[5, 0]])).unwrap() < 0.0);
    assert!(cohen_kappa(&cm(&[&[0, 0, 3], &[0, 2, 0], &[4, 0, 0]])).unwrap() < 0.0);
    assert!(cohen_kappa(&cm(&[&[5, 0], &[0, 0]])).is_err());
    assert!(overall_accuracy(&ConfusionMatrix::zeros(3)).is_err());
}

#[test]
fn empty_class_policy() {
    let m = cm(&[&[3, 1, 0], &[2, 4, 0], &[0, 0, 0]]);
    assert!(mean_accuracy(&m).is_err());
    let r = MetricsReport::from_confusion(&m).unwrap();
    let c = &r.per_class[2];
    assert_eq!((c.accuracy, c.precision, c.f1), (0.0, 0.0, 0.0));
    assert!(r.warnings.iter().any(|w| w.contains("class2")));
    assert!(close(r.macro_f1, r.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0, 1e-15));
}

#[test]
fn report_renders_text_and_json() {
    let names: Vec<String> = ["Beach", "Forest", "River"].iter().map(|s| s.to_string()).collect();
    let r = MetricsReport::from_predictions(&[0, 1, 2, 2, 1], &[0, 1, 2, 1, 1], &names).unwrap();
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in ["overall_accuracy", "mean_accuracy", "kappa", "macro_precision", "macro_recall", "macro_f1"] {
        assert!(json[key].is_number(), "{key}");
    }
    let text = r.to_text();
    assert!(text.contains("River") && text.contains("kappa"));
    for row in &r.normalized_confusion {
        assert!(close(row.iter().sum::<f64>(), 1.0, 1e-12));
    }
    let perfect = MetricsReport::from_predictions(&[0, 1, 2], &[0, 1, 2], &names).unwrap();
    assert!(perfect.per_class.iter().all(|c| c.kappa == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn report_matches_brute_force(seed in any::<u64>(), c in 2usize..7, n in 10usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let pred: Vec<usize> = truth.iter().map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..c) }).collect();
        let names: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
        let r = MetricsReport::from_predictions(&truth, &pred, &names).unwrap();
        let want = common::brute_force_metrics(&truth, &pred, c);
        let got = [r.overall_accuracy, r.mean_accuracy, r.kappa, r.macro_precision, r.macro_recall, r.macro_f1];
        for (g, w) in got.iter().zip(want) {
            prop_assert!((g - w).abs() <= 1e-12, "{:?} vs {:?}", got, want);
        }
        let mean = |f: fn(&dvit_core::metrics::ClassMetrics) -> f64| r.per_class.iter().map(f).sum::<f64>() / c as f64;
        prop_assert!((r.macro_precision - mean(|x| x.precision)).abs() <= 1e-12);
        prop_assert!((r.macro_f1 - mean(|x| x.f1)).abs() <= 1e-12);
        prop_assert!(r.kappa <= 1.0);
        for v in [r.overall_accuracy, r.mean_accuracy, r.macro_precision, r.macro_recall, r.macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for c in &r.per_class {
            prop_assert!((-1.0..=1.0).contains(&c.kappa));
        }
    }

    #[test]
    fn kappa_is_one_only_without_errors(rows in proptest::collection::vec(proptest::collection::vec(0u64..6, 3), 3)) {
        let m = ConfusionMatrix::from_counts(rows).unwrap();
        if let Ok(k) = cohen_kappa(&m) {
            let off: u64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| m.counts[i][j]).sum();
            prop_assert_eq!((k - 1.0).abs() < 1e-12, off == 0);
        }
    }
}

fn features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn kid_point_masses_match_closed_form() {
    let a = vec![0.5, -1.0, 2.0];
    let b = vec![1.5, 0.0, -0.5];
    let x = vec![a.clone(); 12];
    let y = vec![b.clone(); 12];
    let k = |u: &[f64], v: &[f64]| (u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() / 3.0 + 1.0).powi(3);
    let want = k(&a, &a) + k(&b, &b) - 2.0 * k(&a, &b);
    let est = kid(&x, &y, &KidConfig { subsets: 5, ..KidConfig::default() }).unwrap();
    assert!(want > 0.0);
    assert!(close(est.value, want, 1e-10), "{} vs {want}", est.value);
    assert!(close(est.value_x1000, 1000.0 * est.value, 1e-9));
    assert_eq!((est.subset_size, est.dim, est.degree), (12, 3, 3));
}

#[test]
fn kid_same_set_disjoint_subsets_is_unbiased() {
    // averaging the estimator over every disjoint pair of subsets of a pool is exactly 0
    let pool = features(6, 4, 3);
    let refs: Vec<&[f64]> = pool.iter().map(Vec::as_slice).collect();
    let mut sum = 0.0;
    let mut count = 0;
    for a in 0..6 {
        for b in a + 1..6 {
            let rest: Vec<usize> = (0..6).filter(|&i| i != a && i != b).collect();
            for i in 0..rest.len() {
                for j in i + 1..rest.len() {
                    sum += mmd2_unbiased(&[refs[a], refs[b]], &[refs[rest[i]], refs[rest[j]]], 3);
                    count += 1;
                }
            }
        }
    }
    assert_eq!(count, 90);
    assert!((sum / count as f64).abs() <= 1e-6, "{}", sum / count as f64);

    let big = features(400, 8, 4);
    let est = kid(&big, &big, &KidConfig { disjoint: true, subsets: 50, ..KidConfig::default() }).unwrap();
    assert_eq!(est.subset_size, 200);
    assert!(est.value.abs() < 3.0 * est.std / (est.subsets as f64).sqrt() + 1e-3, "{est:?}");
}

#[test]
fn kid_is_seeded_and_separates_distributions() {
    let x = features(60, 5, 1);
    let y: Vec<Vec<f64>> = features(60, 5, 2).into_iter().map(|v| v.into_iter().map(|t| t + 1.0).collect()).collect();
    let cfg = KidConfig { subsets: 20, subset_size: Some(30), seed: 9, ..KidConfig::default() };
    let a = kid(&x, &y, &cfg).unwrap();
    let b = kid(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    let c = kid(&x, &y, &KidConfig { seed: 10, ..cfg.clone() }).unwrap();
    assert_ne!(a.value, c.value);
    let same = kid(&x, &features(60, 5, 3), &cfg).unwrap();
    assert!(a.value > same.value + 0.1);
}

#[test]
fn kid_rejects_bad_inputs() {
    let x = features(5, 3, 1);
    assert!(kid(&x, &x, &KidConfig { subset_size: Some(6), ..KidConfig::default() }).is_err());
    assert!(kid(&x, &x, &KidConfig { subset_size: Some(1), ..KidConfig::default() }).is_err());
    assert!(kid(&x, &x, &KidConfig { disjoint: true, subset_size: Some(3), ..KidConfig::default() }).is_err());
    assert!(kid(&x, &features(5, 4, 1), &KidConfig::default()).is_err());
    assert!(kid(&[], &[], &KidConfig::default()).is_err());
    assert_eq!(poly_kernel(&[1.0, 1.0], &[1.0, 1.0], 3), 8.0);
}
