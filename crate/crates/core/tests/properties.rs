mod common;

use dtfusion::fusion::{ProbMatrix, RowSumPolicy};
use dtfusion::inference::{predict_groups, CropSelection};
use dtfusion::metrics::{self, CropMode};
use dtfusion::{
    fit_templates, predict, predict_batch, score, softmax, CrispLabel, CropGroup, DecisionProfile,
    DecisionTemplateSet, EnsembleSpec, LabelSpace, LogitVector, MeasureKind,
};
use proptest::prelude::*;
use rand::Rng;

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=4, 2usize..=8, any::<u64>())
}

fn fitted(seed: u64, k: usize, c: usize, n: usize) -> (Vec<DecisionProfile>, Vec<CrispLabel>, DecisionTemplateSet) {
    let mut r = common::rng(seed);
    let ls = LabelSpace::indexed(c).unwrap();
    let profiles: Vec<DecisionProfile> = (0..n).map(|_| common::profile(&mut r, k, c)).collect();
    let labels: Vec<CrispLabel> = (0..n)
        .map(|j| CrispLabel::new(if j < c { j } else { r.random_range(0..c) }, &ls).unwrap())
        .collect();
    let dt = fit_templates(&profiles, &labels, &ls, &EnsembleSpec::indexed(k).unwrap()).unwrap();
    (profiles, labels, dt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_is_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 2..12),
        shift in -1e3f64..1e3,
    ) {
        let a = softmax(&LogitVector::new(logits.clone()).unwrap());
        let b = softmax(&LogitVector::new(logits.iter().map(|z| z + shift).collect()).unwrap());
        let sum: f64 = a.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(a.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn softmax_survives_extreme_logits(big in 500.0f64..1e300) {
        let v = softmax(&LogitVector::new(vec![big, 0.0, -big]).unwrap());
        prop_assert_eq!(v.argmax(), 0);
        prop_assert!(v.probs().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn fitted_templates_are_row_stochastic((k, c, seed) in shape(), n in 8usize..60) {
        let (profiles, labels, dt) = fitted(seed, k, c, n.max(c));
        prop_assert_eq!(dt.support_counts().iter().sum::<usize>(), profiles.len());
        for t in dt.templates() {
            for row in t.row_iter() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
        let rev_p: Vec<_> = profiles.iter().rev().cloned().collect();
        let rev_l: Vec<_> = labels.iter().rev().copied().collect();
        let rev = fit_templates(&rev_p, &rev_l, dt.label_space(), dt.ensemble()).unwrap();
        for (a, b) in dt.templates().iter().zip(rev.templates()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn measures_stay_in_unit_interval((k, c, seed) in shape()) {
        let mut r = common::rng(seed);
        let (a, b) = (common::matrix(&mut r, k, c), common::matrix(&mut r, k, c));
        for kind in MeasureKind::ALL {
            let v = score(kind, &a, &b).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{kind} = {v}");
        }
        prop_assert!(score(MeasureKind::I1, &a, &b).unwrap() <= 1.0);
        for kind in [MeasureKind::S1, MeasureKind::S2, MeasureKind::C, MeasureKind::N] {
            let ab = score(kind, &a, &b).unwrap();
            let ba = score(kind, &b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-15, "{kind} asymmetric: {ab} vs {ba}");
        }
    }

    #[test]
    fn predictions_ignore_classifier_order((k, c, seed) in shape()) {
        let (profiles, _, dt) = fitted(seed, k, c, 30);
        let perm: Vec<usize> = (0..k).rev().collect();
        let reorder = |m: &ProbMatrix| ProbMatrix::from_rows(&common::permute_rows(&m.to_rows(), &perm)).unwrap();
        let dt2 = DecisionTemplateSet::from_parts(
            dt.label_space().clone(),
            dt.ensemble().clone(),
            dt.templates().iter().map(reorder).collect(),
            dt.support_counts().to_vec(),
        ).unwrap();
        for p in &profiles {
            let p2 = DecisionProfile::from_rows(common::permute_rows(&p.matrix().to_rows(), &perm), RowSumPolicy::Strict).unwrap();
            for kind in MeasureKind::ALL {
                prop_assert_eq!(predict(p, &dt, kind).unwrap(), predict(&p2, &dt2, kind).unwrap());
            }
        }
    }

    #[test]
    fn metrics_are_consistent(c in 2usize..8, seed in any::<u64>(), n in 1usize..200) {
        let mut r = common::rng(seed);
        let ls = LabelSpace::indexed(c).unwrap();
        let truth: Vec<CrispLabel> = (0..n).map(|_| CrispLabel::new(r.random_range(0..c), &ls).unwrap()).collect();
        let preds: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let cm = metrics::confusion(&preds, &truth, c).unwrap();
        prop_assert_eq!(cm.total(), n as u64);
        let rep = metrics::report(&cm, &ls, MeasureKind::C, CropMode::Single).unwrap();
        prop_assert!((rep.overall_accuracy + rep.error_rate - 1.0).abs() <= 1e-12);
        prop_assert_eq!(rep.per_class.iter().map(|p| p.support).sum::<u64>(), n as u64);
        prop_assert_eq!(rep.per_class.iter().map(|p| p.predicted).sum::<u64>(), n as u64);
        for pc in &rep.per_class {
            for v in [&pc.precision, &pc.recall, &pc.f1] {
                if let Some(x) = v.value() {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
        }
    }
}

#[test]
fn predictions_identical_across_thread_counts() {
    let (profiles, _, dt) = fitted(99, 3, 7, 400);
    let mut r = common::rng(100);
    let groups: Vec<CropGroup> = (0..200)
        .map(|i| CropGroup::new(format!("s{i}"), (0..5).map(|_| common::profile(&mut r, 3, 7)).collect()).unwrap())
        .collect();
    let refs: Vec<&CropGroup> = groups.iter().collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            MeasureKind::ALL
                .iter()
                .map(|&m| {
                    (
                        predict_batch(&profiles, &dt, m).unwrap(),
                        predict_groups(&refs, &dt, m, CropSelection::Vote).unwrap(),
                    )
                })
                .collect::<Vec<_>>()
        })
    };
    let one = run(1);
    for threads in [2, 4, 8] {
        assert_eq!(one, run(threads), "{threads} threads");
    }
}

#[test]
fn batch_shape_error_names_the_sample() {
    let (mut profiles, _, dt) = fitted(5, 2, 3, 20);
    let mut r = common::rng(6);
    profiles.insert(4, common::profile(&mut r, 2, 4));
    let err = predict_batch(&profiles, &dt, MeasureKind::S1).unwrap_err();
    assert!(err.to_string().contains("sample 4"), "{err}");
}

#[test]
fn empty_class_is_a_fit_error() {
    let ls = LabelSpace::indexed(3).unwrap();
    let mut r = common::rng(1);
    let profiles: Vec<_> = (0..4).map(|_| common::profile(&mut r, 2, 3)).collect();
    let labels: Vec<_> = [0, 0, 2, 2].iter().map(|&l| CrispLabel::new(l, &ls).unwrap()).collect();
    let err = fit_templates(&profiles, &labels, &ls, &EnsembleSpec::indexed(2).unwrap()).unwrap_err();
    assert_eq!(err.kind(), dtfusion::ErrorKind::Fit);
    assert!(err.to_string().contains("class_1"), "{err}");
}
