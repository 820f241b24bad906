use std::collections::BTreeMap;

use divrank_core::autodiff::{sgd_step, Tape};
use divrank_core::cae::{build_examples, train_cae, ModelShape, ScoringModel, TrainOptions, TrainingExample};
use divrank_core::interest::InterestInputs;
use divrank_core::{BehaviorEvent, EmbeddingTable, ItemRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const D: usize = 8;

/// Two Gaussian clouds; items of the first cloud are clicked.
fn separable(seed: u64, n: usize) -> (Vec<InterestInputs>, Vec<TrainingExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let center: Vec<f64> = (0..D).map(|_| rng.random_range(-1.0..1.0)).collect();
    let users: Vec<InterestInputs> = (0..4)
        .map(|_| InterestInputs {
            points: (0..2)
                .map(|_| (0..D).map(|_| noise.sample(&mut rng)).collect())
                .collect(),
            recent: (0..3)
                .map(|_| (0..D).map(|_| noise.sample(&mut rng)).collect())
                .collect(),
            buckets: vec![0, 1, 2],
        })
        .collect();
    let examples = (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let target: Vec<f64> = center.iter().map(|c| sign * c + noise.sample(&mut rng)).collect();
            TrainingExample {
                user: i % users.len(),
                target,
                base: None,
                h_prev: (0..D).map(|_| noise.sample(&mut rng)).collect(),
                h_cand: (0..D).map(|_| noise.sample(&mut rng)).collect(),
                label,
            }
        })
        .collect();
    (users, examples)
}

fn model(seed: u64) -> ScoringModel {
    ScoringModel::new(ModelShape::new(D, 4), &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn separable_clouds_reach_high_auc() {
    let (users, examples) = separable(1, 200);
    let mut m = model(2);
    let curve = train_cae(
        &mut m,
        &users,
        &examples,
        &TrainOptions {
            lr: 0.05,
            epochs: 50,
            seed: 3,
        },
    )
    .unwrap();
    assert_eq!(curve.len(), 50);
    let last = curve.last().unwrap();
    assert!(last.auc >= 0.95, "final AUC {}", last.auc);
    assert!(last.loss < curve[0].loss);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (users, examples) = separable(4, 40);
    let mut m = model(5);
    let before = m.clone();
    let curve = train_cae(
        &mut m,
        &users,
        &examples,
        &TrainOptions {
            lr: 0.0,
            epochs: 3,
            seed: 6,
        },
    )
    .unwrap();
    for (a, b) in m.tensors().iter().zip(before.tensors()) {
        let bits = |t: &[f64]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.data()), bits(b.data()));
    }
    assert!(curve.iter().all(|e| e.loss == curve[0].loss && e.auc == curve[0].auc));
}

#[test]
fn one_small_step_does_not_raise_the_loss() {
    let (users, examples) = separable(7, 2);
    for ex in examples {
        let mut m = model(8);
        let before = m.example_loss(&users[ex.user], &ex).unwrap();
        let mut tape = Tape::new();
        let (logits, vars) = m.forward(&mut tape, &users[ex.user], &ex).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[ex.label as usize]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let mut params = m.tensors_mut();
        for (v, t) in vars.iter().zip(params.iter_mut()) {
            grads.accumulate(*v, t);
        }
        sgd_step(&mut params, 1e-3).unwrap();
        let after = m.example_loss(&users[ex.user], &ex).unwrap();
        assert!(after <= before, "{before} -> {after}");
    }
}

#[test]
fn single_class_labels_are_rejected() {
    let (users, mut examples) = separable(12, 6);
    examples.iter_mut().for_each(|e| e.label = 1);
    let err = train_cae(
        &mut model(1),
        &users,
        &examples,
        &TrainOptions {
            lr: 0.1,
            epochs: 1,
            seed: 0,
        },
    );
    assert!(matches!(err, Err(divrank_core::Error::Validation(_))));
}

#[test]
fn training_is_seed_deterministic() {
    let (users, examples) = separable(9, 60);
    let run = |seed| {
        let mut m = model(10);
        let c = train_cae(
            &mut m,
            &users,
            &examples,
            &TrainOptions {
                lr: 0.05,
                epochs: 3,
                seed,
            },
        )
        .unwrap();
        (m, c)
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).0, run(2).0);
}

#[test]
fn checkpoint_roundtrip() {
    let m = model(11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.json");
    m.save(&path).unwrap();
    assert_eq!(ScoringModel::load(&path).unwrap(), m);
}

#[test]
fn examples_rebuild_session_context() {
    let table: EmbeddingTable = [
        ItemRecord::new("a", vec![2.0, 0.0]),
        ItemRecord::new("b", vec![0.0, 2.0]),
        ItemRecord::new("c", vec![1.0, 1.0]),
    ]
    .into_iter()
    .collect::<divrank_core::Result<_>>()
    .unwrap();
    let ev = vec![
        BehaviorEvent::new("u", "b", 20).with_label(0),
        BehaviorEvent::new("u", "a", 10).with_label(1),
        BehaviorEvent::new("u", "c", 30),
    ];
    let users = BTreeMap::from([("u".to_string(), 0)]);
    let ex = build_examples(&ev, &table, &users).unwrap();
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].target, vec![2.0, 0.0]);
    assert_eq!(ex[0].h_prev, vec![0.0, 0.0]);
    assert_eq!(ex[1].h_prev, vec![2.0, 0.0]);
    assert_eq!(ex[1].h_cand, vec![1.0, 1.0]);
    assert_eq!((ex[0].label, ex[1].label), (1, 0));
}
