//! Property checks shared by the proptest suites and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talkdet::eval::auc;
use talkdet::flow::MagnitudeField;
use talkdet::learn::{train, Dataset, Hyper, LabeledExample, ModelKind, ModelParams, TrainedModel, TreeHyper, TreeNode};
use talkdet::projection::{project_log_magnitude, MAGNITUDE_FLOOR};
use talkdet::Label;

use super::oracles::{exhaustive_root, pair_count_auc};

type Check = Result<(), TestCaseError>;

const TOL: f64 = 1e-9;

pub fn label(t: bool) -> Label {
    if t {
        Label::Talking
    } else {
        Label::NotTalking
    }
}

pub fn dataset(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Dataset {
    Dataset::new(
        rows.into_iter()
            .zip(labels)
            .map(|(features, t)| LabeledExample {
                features,
                label: label(t),
                clip_ref: String::new(),
            })
            .collect(),
    )
    .unwrap()
}

fn training_error(m: &TrainedModel, d: &Dataset) -> usize {
    d.examples()
        .iter()
        .filter(|e| m.predict(&e.features).unwrap() != e.label)
        .count()
}

// ---- projection -------------------------------------------------------

/// Magnitudes are either exactly zero or at least 1e-3, so "nonzero" is
/// always resolvable in the projection.
fn magnitude() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 1e-3..10.0f64]
}

pub fn magnitude_fields(max_fields: usize) -> impl Strategy<Value = Vec<MagnitudeField>> {
    (1..=6usize, 1..=6usize, 1..=max_fields).prop_flat_map(|(w, h, n)| {
        prop::collection::vec(prop::collection::vec(magnitude(), w * h), n).prop_map(move |ms| {
            ms.into_iter()
                .map(|mag| MagnitudeField { width: w, height: h, mag })
                .collect()
        })
    })
}

pub fn projection_order_invariance(mags: &[MagnitudeField], seed: u64) -> Check {
    let mut shuffled = mags.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.random_range(0..=i));
    }
    let a = project_log_magnitude(mags).unwrap();
    let b = project_log_magnitude(&shuffled).unwrap();
    for (x, y) in a.p.iter().zip(&b.p) {
        prop_assert!((x - y).abs() <= TOL * (1.0 + x.abs()), "{} vs {}", x, y);
    }
    Ok(())
}

/// Split after `k` fields (1 ≤ k < len).
pub fn projection_additivity(mags: &[MagnitudeField], k: usize) -> Check {
    let whole = project_log_magnitude(mags).unwrap();
    let a = project_log_magnitude(&mags[..k]).unwrap();
    let b = project_log_magnitude(&mags[k..]).unwrap();
    prop_assert_eq!(whole.fields, a.fields + b.fields);
    for i in 0..whole.p.len() {
        let sum = a.p[i] + b.p[i];
        prop_assert!((whole.p[i] - sum).abs() <= TOL * (1.0 + sum.abs()));
    }
    Ok(())
}

pub fn projection_lower_bound(mags: &[MagnitudeField]) -> Check {
    let proj = project_log_magnitude(mags).unwrap();
    let floor = mags.len() as f64 * MAGNITUDE_FLOOR.ln();
    prop_assert!((proj.floor() - floor).abs() <= TOL);
    let mut any_still = false;
    for i in 0..proj.p.len() {
        let still = mags.iter().all(|m| m.mag[i] == 0.0);
        any_still |= still;
        if still {
            prop_assert!((proj.p[i] - floor).abs() <= TOL, "still pixel {} vs {}", proj.p[i], floor);
        } else {
            // the smallest nonzero magnitude lifts p by ln(1.1) ≈ 0.095
            prop_assert!(proj.p[i] > floor + 0.09, "moving pixel {} at floor {}", proj.p[i], floor);
        }
    }
    let min = proj.p.iter().cloned().fold(f64::INFINITY, f64::min);
    prop_assert_eq!((min - floor).abs() <= TOL, any_still);
    Ok(())
}

pub fn projection_monotonicity(mags: &[MagnitudeField], field: usize, pixel: usize, delta: f64) -> Check {
    let mut bumped = mags.to_vec();
    bumped[field].mag[pixel] += delta;
    let a = project_log_magnitude(mags).unwrap();
    let b = project_log_magnitude(&bumped).unwrap();
    prop_assert!(b.p[pixel] > a.p[pixel]);
    for j in 0..a.p.len() {
        if j != pixel {
            prop_assert_eq!(a.p[j].to_bits(), b.p[j].to_bits());
        }
    }
    Ok(())
}

// ---- classifiers ------------------------------------------------------

/// Rows on a coarse integer grid (so ties are common) with both classes.
pub fn small_dataset(max_points: usize, max_dim: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_points, 1..=max_dim).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(0..6i32, d), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, l)| l.iter().any(|&t| t) && l.iter().any(|&t| !t))
            .prop_map(|(rows, labels)| {
                dataset(rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(), labels)
            })
    })
}

pub fn dtree_root_is_exhaustive_optimum(data: &Dataset, min_leaf: usize) -> Check {
    let mut h = Hyper::default();
    h.dtree = TreeHyper { max_depth: 8, min_leaf };
    let m = train(ModelKind::Dtree, data, &h, 0).unwrap();
    let ModelParams::Dtree(tree) = &m.params else { unreachable!() };
    let got = match tree.nodes[0] {
        TreeNode::Split { feature, threshold, .. } => Some((feature, threshold)),
        TreeNode::Leaf { .. } => None,
    };
    let expect = if data.len() < 2 * min_leaf { None } else { exhaustive_root(data, min_leaf) };
    prop_assert_eq!(got, expect);
    Ok(())
}

pub fn adaboost_error_non_increasing(data: &Dataset, rounds: usize) -> Check {
    let mut h = Hyper::default();
    let mut previous = usize::MAX;
    for r in 1..=rounds {
        h.adaboost.rounds = r;
        let m = train(ModelKind::Adaboost, data, &h, 0).unwrap();
        let err = training_error(&m, data);
        prop_assert!(err <= previous, "round {}: {} > {}", r, err, previous);
        previous = err;
    }
    Ok(())
}

pub fn knn_k1_memorizes(seed: u64, n: usize, d: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    labels[0] = true;
    labels[1] = false;
    let data = dataset(rows, labels);
    let mut h = Hyper::default();
    h.knn.k = 1;
    let m = train(ModelKind::Knn, &data, &h, 0).unwrap();
    prop_assert_eq!(training_error(&m, &data), 0);
    Ok(())
}

pub fn qda_scaling_invariance(seed: u64, scale: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n) = (3, 24);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|j| rng.random::<f64>() * (1.0 + j as f64) + if i % 2 == 0 { 0.4 } else { 0.0 }).collect())
        .collect();
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let base = dataset(rows.clone(), labels.clone());
    let scaled = dataset(rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect(), labels);
    let a = train(ModelKind::Qda, &base, &Hyper::default(), 0).unwrap();
    let b = train(ModelKind::Qda, &scaled, &Hyper::default(), 0).unwrap();
    for _ in 0..50 {
        let x: Vec<f64> = (0..d).map(|j| rng.random::<f64>() * (1.5 + j as f64) - 0.2).collect();
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let (sa, sb) = (a.score(&x).unwrap(), b.score(&xs).unwrap());
        prop_assert!((sa - sb).abs() < 1e-6, "{} vs {}", sa, sb);
        if (sa - 0.5).abs() > 1e-6 {
            prop_assert_eq!(a.predict(&x).unwrap(), b.predict(&xs).unwrap());
        }
    }
    Ok(())
}

// ---- AUC --------------------------------------------------------------

/// Scores on a coarse grid so ties are frequent, with both classes.
pub fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2..60usize).prop_flat_map(|n| {
        (
            prop::collection::vec((0..12u32).prop_map(|k| k as f64 / 11.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, t)| t.iter().any(|&x| x) && t.iter().any(|&x| !x))
            .prop_map(|(s, t)| (s, t.into_iter().map(label).collect()))
    })
}

pub fn auc_matches_pair_count(scores: &[f64], truth: &[Label]) -> Check {
    let a = auc(scores, truth).unwrap();
    let b = pair_count_auc(scores, truth);
    prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    Ok(())
}
