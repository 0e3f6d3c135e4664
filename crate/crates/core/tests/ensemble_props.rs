use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talkdet::ensemble::{majority_vote, select_top3, EnsembleMember, EnsembleModel, MetricRow};
use talkdet::learn::{train, Dataset, Hyper, LabeledExample, ModelKind};
use talkdet::Label;

fn label(t: bool) -> Label {
    if t {
        Label::Talking
    } else {
        Label::NotTalking
    }
}

fn rows() -> impl Strategy<Value = Vec<MetricRow>> {
    prop::collection::vec((0..8u32, 0..8u32, 0..8u32), 3..9).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, u, f))| MetricRow {
                model_id: format!("m{i}"),
                accuracy: a as f64 / 7.0,
                auc: u as f64 / 7.0,
                f1: f as f64 / 7.0,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn majority_is_symmetric(a in any::<bool>(), b in any::<bool>(), c in any::<bool>()) {
        let (a, b, c) = (label(a), label(b), label(c));
        let m = majority_vote([a, b, c]);
        for perm in [[a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            prop_assert_eq!(majority_vote(perm), m);
        }
        if a == b && b == c {
            prop_assert_eq!(m, a);
        }
    }

    #[test]
    fn selection_depends_only_on_order(rows in rows(), column in 0usize..3, power in 0.2f64..4.0) {
        let base = select_top3(&rows).unwrap();
        let transformed: Vec<MetricRow> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let v = [&mut r.accuracy, &mut r.auc, &mut r.f1][column].powf(power);
                *[&mut r.accuracy, &mut r.auc, &mut r.f1][column] = v;
                r
            })
            .collect();
        prop_assert_eq!(select_top3(&transformed).unwrap().chosen, base.chosen);
    }

    #[test]
    fn selection_keeps_a_dominant_row(mut rows in rows(), at in any::<prop::sample::Index>()) {
        let i = at.index(rows.len());
        rows[i] = MetricRow { model_id: "best".into(), accuracy: 1.0, auc: 1.0, f1: 1.0 };
        for (j, r) in rows.iter_mut().enumerate() {
            if j != i {
                r.accuracy = r.accuracy.min(0.99);
                r.auc = r.auc.min(0.99);
                r.f1 = r.f1.min(0.99);
            }
        }
        let sel = select_top3(&rows).unwrap();
        prop_assert_eq!(&sel.chosen[0], "best");
    }
}

#[test]
fn ensemble_prediction_is_the_members_majority() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let examples = (0..80)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let talking = x[0] + 0.5 * x[1] - 0.3 * x[2] + rng.random_range(-0.3..0.3) > 0.6;
            LabeledExample {
                features: x,
                label: label(talking),
                clip_ref: String::new(),
            }
        })
        .collect();
    let data = Dataset::new(examples).unwrap();
    let members = [ModelKind::Knn, ModelKind::Dtree, ModelKind::Qda].map(|k| EnsembleMember {
        model: train(k, &data, &Hyper::default(), 3).unwrap(),
        model_id: k.to_string(),
        path: format!("{k}.json").into(),
    });
    let ensemble = EnsembleModel::new(members.clone(), None).unwrap();
    let mut splits = 0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.2..1.2)).collect();
        let votes = members.clone().map(|m| m.model.predict(&x).unwrap());
        let verdict = ensemble.predict(&x).unwrap();
        assert_eq!(verdict.label, majority_vote(votes));
        for (m, v) in members.iter().zip(votes) {
            assert_eq!(verdict.member_votes[&m.model_id], v);
        }
        splits += (votes.iter().any(|v| *v != votes[0])) as usize;
    }
    assert!(splits > 0, "members never disagreed; the check is vacuous");
}

#[test]
fn members_must_be_distinct_and_compatible() {
    let data = Dataset::new(
        (0..6)
            .map(|i| LabeledExample {
                features: vec![i as f64],
                label: label(i >= 3),
                clip_ref: String::new(),
            })
            .collect(),
    )
    .unwrap();
    let model = train(ModelKind::Knn, &data, &Hyper::default(), 0).unwrap();
    let member = |id: &str| EnsembleMember {
        model_id: id.into(),
        path: format!("{id}.json").into(),
        model: model.clone(),
    };
    assert!(EnsembleModel::new([member("a"), member("a"), member("b")], None).is_err());
    assert!(EnsembleModel::new([member("a"), member("b"), member("c")], None).is_ok());
}
