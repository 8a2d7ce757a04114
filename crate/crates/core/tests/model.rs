mod common;

use common::*;
use drgbab::model::{load_network, load_task, save_task, ModelError};
use proptest::prelude::*;
use std::fs;

#[test]
fn forward_matches_reference_evaluator() {
    let mut r = rng(11);
    for _ in 0..20 {
        let net = random_network(&mut r, 3, &[7, 5], 4, 1.5);
        let b = random_box(&mut r, 3, 0.5);
        for x in [b.center(), sample_in(&mut r, &b)] {
            let (logits, preacts) = net.forward(&x).unwrap();
            let reference = reference_forward(&raw_layers(&net), &x);
            assert_eq!(preacts.len(), 3);
            assert_eq!(preacts.last().unwrap(), &logits);
            for (a, e) in logits.iter().zip(&reference) {
                assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()));
            }
        }
    }
}

#[test]
fn margin_matches_reference() {
    let mut r = rng(12);
    for _ in 0..20 {
        let task = random_task(&mut r, 4, &[6], 3, 0.3);
        let x = sample_in(&mut r, &task.input_box);
        let got = task.margin(&x).unwrap();
        for (a, e) in got.iter().zip(reference_margin(&task, &x)) {
            assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }
}

#[test]
fn files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(13);
    let task = random_task(&mut r, 3, &[5, 4], 3, 0.2).with_budget(12.5, 77);
    let (m, s) = (dir.path().join("m.json"), dir.path().join("s.json"));
    save_task(&task, &m, &s).unwrap();
    let back = load_task(&m, &s).unwrap();
    assert_eq!(back, task);
}

fn write(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn malformed_inputs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad_act = write(
        d,
        "a.json",
        r#"{"input_dim":1,"layers":[{"weights":[[1.0]],"bias":[0.0],"activation":"tanh"},{"weights":[[1.0]],"bias":[0.0],"activation":"linear"}]}"#,
    );
    let err = load_network(&bad_act).unwrap_err();
    assert!(matches!(err, ModelError::Invalid { .. }), "{err}");
    assert!(err.to_string().contains("activation"));

    let bad_shape = write(
        d,
        "b.json",
        r#"{"input_dim":2,"layers":[{"weights":[[1.0]],"bias":[0.0],"activation":"linear"}]}"#,
    );
    assert!(load_network(&bad_shape).is_err());

    let good = write(
        d,
        "c.json",
        r#"{"input_dim":1,"layers":[{"weights":[[1.0]],"bias":[0.0],"activation":"relu"},{"weights":[[1.0]],"bias":[0.0],"activation":"linear"}]}"#,
    );
    let inverted = write(d, "s.json", r#"{"input_lower":[1.0],"input_upper":[0.0],"C":[[1.0]]}"#);
    let err = load_task(&good, &inverted).unwrap_err();
    assert!(err.to_string().contains("input_lower[0]"), "{err}");

    let wrong_c = write(d, "s2.json", r#"{"input_lower":[0.0],"input_upper":[1.0],"C":[[1.0, 2.0]]}"#);
    assert!(load_task(&good, &wrong_c).is_err());

    let garbage = write(d, "g.json", "{not json");
    assert!(matches!(load_network(&garbage).unwrap_err(), ModelError::Parse { .. }));
    assert!(matches!(
        load_network(&d.join("missing.json")).unwrap_err(),
        ModelError::Io { .. }
    ));
}

#[test]
fn rejects_bad_inputs() {
    let task = shifted_relu(0.0);
    assert!(matches!(
        task.network.forward(&[1.0, 2.0]),
        Err(ModelError::DimensionMismatch { expected: 1, actual: 2 })
    ));
    assert!(matches!(
        task.network.forward(&[f64::NAN]),
        Err(ModelError::NonFiniteInput { index: 0 })
    ));
}

proptest! {
    #[test]
    fn relu_outputs_never_negative(seed in 0u64..1000, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
        let mut r = rng(seed);
        let net = random_network(&mut r, 2, &[4, 3], 2, 2.0);
        let (_, preacts) = net.forward(&[x0, x1]).unwrap();
        let hidden = &preacts[..preacts.len() - 1];
        for (i, layer) in hidden.iter().enumerate() {
            let post: Vec<f64> = layer.iter().map(|z| z.max(0.0)).collect();
            let next = net.layers()[i + 1].affine(&post);
            prop_assert_eq!(&next, &preacts[i + 1]);
        }
    }
}
