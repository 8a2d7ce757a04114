mod common;

use common::*;
use drgbab::relax::{concretize, linear_value};
use drgbab::witness::{construct_witness, validate_witness, WitnessKind};
use proptest::prelude::*;

proptest! {
    #[test]
    fn witness_attains_corner_minimum(
        w in prop::collection::vec(-3.0f64..3.0, 1..=12),
        b in -2.0f64..2.0,
        seed in 0u64..10_000,
    ) {
        let mut r = rng(seed);
        let bx = random_box(&mut r, w.len(), 0.5);
        let x = construct_witness(&w, &bx);
        prop_assert!(bx.contains(&x));
        let at_witness = linear_value(&w, b, &x);
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << w.len()) {
            let c: Vec<f64> = (0..w.len())
                .map(|k| if mask >> k & 1 == 1 { bx.upper[k] } else { bx.lower[k] })
                .collect();
            best = best.min(linear_value(&w, b, &c));
        }
        prop_assert!(at_witness <= best);
        prop_assert_eq!(at_witness, concretize(&w, b, &bx));
    }
}

#[test]
fn classification_follows_reference_margin() {
    let mut r = rng(41);
    for _ in 0..200 {
        let task = random_task(&mut r, 3, &[5], 2, 0.5);
        let x = sample_in(&mut r, &task.input_box);
        let v = validate_witness(&task.network, &task.spec, x.clone(), -1.0);
        let reference = min_margin(&task, &x);
        let expected = if reference <= 0.0 {
            WitnessKind::ConcreteViolation
        } else {
            WitnessKind::Spurious
        };
        assert_eq!(v.kind, expected);
    }
}
