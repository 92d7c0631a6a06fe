mod common;

use common::{random_sequence, rng, tiny};
use marn_core::harness::{evaluate, train, TrainConfig};
use marn_core::optim::{Adam, AdamConfig};
use marn_core::params::Init;
use marn_core::{Marn, MultimodalSequence, ParamStore, Tape, Tensor, Variant};

fn dataset(n: usize, seed: u64) -> Vec<MultimodalSequence> {
    let mut r = rng(seed);
    (0..n).map(|i| random_sequence(&mut r, 3 + i % 3, 3, (i % 2) as f64)).collect()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 0.01,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        clip_norm: 1.0,
        patience: 0,
        seed: 3,
    }
}

#[test]
fn zero_epochs_returns_initial_params() {
    let (model, store) = Marn::build(&tiny(Variant::Full)).unwrap();
    let out = train(&model, &store, &dataset(8, 1), &dataset(4, 2), &cfg(0)).unwrap();
    assert_eq!(out.params, store);
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, 0);
}

#[test]
fn quadratic_loss_decreases_monotonically() {
    let mut store = ParamStore::new();
    let p = store.add("p", &[1], Init::Constant(2.0));
    store.initialize(0);
    let mut opt = Adam::new(AdamConfig { learning_rate: 0.01, ..AdamConfig::default() }, &store);
    let loss = |s: &mut ParamStore, backward: bool| {
        let mut tape = Tape::new();
        let v = tape.param(s, p);
        let target = tape.leaf(Tensor::scalar(-0.5));
        let d = tape.add(v, target).unwrap();
        let sq = tape.mul(d, d).unwrap();
        let l = tape.sum(sq);
        let value = tape.value(l).data()[0];
        if backward {
            s.zero_grad();
            tape.backward(l, s).unwrap();
        }
        value
    };
    let mut prev = loss(&mut store, false);
    for _ in 0..10 {
        loss(&mut store, true);
        opt.step(&mut store);
        let now = loss(&mut store, false);
        assert!(now < prev, "{now} !< {prev}");
        prev = now;
    }
}

#[test]
fn identical_seeds_identical_history() {
    let (model, store) = Marn::build(&tiny(Variant::Full)).unwrap();
    let (tr, va) = (dataset(12, 1), dataset(4, 2));
    let a = train(&model, &store, &tr, &va, &cfg(3)).unwrap();
    let b = train(&model, &store, &tr, &va, &cfg(3)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.len(), 3);
    let mut other = cfg(3);
    other.seed = 4;
    let c = train(&model, &store, &tr, &va, &other).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (model, store) = Marn::build(&tiny(Variant::NoAttention)).unwrap();
    let mut c = cfg(2);
    c.learning_rate = 0.0;
    let out = train(&model, &store, &dataset(8, 1), &dataset(4, 2), &c).unwrap();
    for (a, b) in out.params.iter().zip(store.iter()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.1), bits(b.1), "{}", a.0);
    }
}

#[test]
fn training_reduces_loss_on_learnable_data() {
    // label = sign of the first language feature at the last step
    let mut data = dataset(40, 5);
    for s in &mut data {
        let last = s.streams["language"].last().unwrap()[0];
        s.label = if last > 0.0 { 1.0 } else { 0.0 };
    }
    let (model, store) = Marn::build(&tiny(Variant::Full)).unwrap();
    let mut c = cfg(15);
    c.learning_rate = 0.02;
    let out = train(&model, &store, &data[..30], &data[30..], &c).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < 0.7 * first, "{first} -> {last}");
    let best = out.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch - 1].val_loss, best);
}

#[test]
fn early_stopping_respects_patience() {
    let (model, store) = Marn::build(&tiny(Variant::NoMab)).unwrap();
    let mut c = cfg(50);
    c.learning_rate = 0.0;
    c.patience = 2;
    let out = train(&model, &store, &dataset(8, 1), &dataset(4, 2), &c).unwrap();
    // no change after the first epoch, so two stale epochs follow it
    assert_eq!(out.history.len(), 3);
}

#[test]
fn divergence_names_the_batch() {
    let (model, mut store) = Marn::build(&tiny(Variant::NoMab)).unwrap();
    let id = store.id("head.1.bias").unwrap();
    store.value_mut(id).data_mut()[0] = f64::INFINITY;
    let err = train(&model, &store, &dataset(8, 1), &dataset(4, 2), &cfg(1)).unwrap_err();
    assert!(err.to_string().contains("epoch 1, batch 0"), "{err}");
}

#[test]
fn empty_splits_rejected() {
    let (model, store) = Marn::build(&tiny(Variant::NoMab)).unwrap();
    assert!(train(&model, &store, &[], &dataset(4, 2), &cfg(1)).is_err());
    assert!(train(&model, &store, &dataset(4, 2), &[], &cfg(1)).is_err());
    assert!(evaluate(&model, &store, &[]).is_err());
}

#[test]
fn evaluation_is_pure_and_counts() {
    let (model, store) = Marn::build(&tiny(Variant::Full)).unwrap();
    let data = dataset(10, 8);
    let before = store.clone();
    let a = evaluate(&model, &store, &data).unwrap();
    let b = evaluate(&model, &store, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n, 10);
    assert_eq!(store, before);
}

#[test]
fn constant_output_scores_label_frequency() {
    let (model, mut store) = Marn::build(&tiny(Variant::Full)).unwrap();
    // zero last head layer, bias favouring class 1
    for name in ["head.1.weight", "head.1.bias"] {
        let shape = store.get(name).unwrap().shape().to_vec();
        store.set(name, Tensor::zeros(&shape)).unwrap();
    }
    store.set("head.1.bias", Tensor::vector(vec![0.0, 1.0])).unwrap();
    let mut data = dataset(21, 9);
    for (i, s) in data.iter_mut().enumerate() {
        s.label = if i < 11 { 1.0 } else { 0.0 };
    }
    let report = evaluate(&model, &store, &data).unwrap();
    assert_eq!(report.accuracy, Some(11.0 / 21.0));
    assert_eq!(report.class_counts, vec![10, 11]);
}
