mod common;

use common::{random_sequence, rng, tiny};
use marn_core::gradcheck::{check_params, DEFAULT_STEP};
use marn_core::{Marn, Task, Variant};

fn check_variant(variant: Variant, task: Task) {
    let mut cfg = tiny(variant);
    cfg.task = task;
    let (model, mut store) = Marn::build(&cfg).unwrap();
    let label = match task {
        Task::Classification { .. } => 1.0,
        Task::Regression => 0.7,
    };
    let seq = random_sequence(&mut rng(3), 5, 3, label);
    let rows = check_params(
        &mut store,
        DEFAULT_STEP,
        |s| model.loss_value(s, &seq),
        |s| model.accumulate_gradients(s, &seq).map(|_| ()),
    )
    .unwrap();
    assert_eq!(rows.len(), store.len());
    for row in rows {
        assert!(row.max_error <= 1e-4, "{variant:?}: {row:?}");
    }
}

#[test]
fn classification_gradients_all_variants() {
    for v in Variant::ALL {
        check_variant(v, Task::Classification { classes: 2 });
    }
}

#[test]
fn regression_gradients_full_model() {
    check_variant(Variant::Full, Task::Regression);
}

#[test]
fn multiclass_gradients() {
    check_variant(Variant::NoAttention, Task::Classification { classes: 4 });
}
