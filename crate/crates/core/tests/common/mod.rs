//! Helpers shared by the integration tests. The reference evaluators here do
//! not call into the crate's numeric code.

#![allow(dead_code)]

use drgbab::model::{Activation, Layer};
use drgbab::{InputBox, Network, VerificationTask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain nested-loop forward pass over raw weight arrays.
/// `(weights, bias, relu)` per layer.
pub type RawLayer = (Vec<Vec<f64>>, Vec<f64>, bool);

pub fn reference_forward(layers: &[RawLayer], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (w, b, relu) in layers {
        let mut out = vec![0.0; w.len()];
        for i in 0..w.len() {
            let mut acc = b[i];
            for k in 0..h.len() {
                acc += w[i][k] * h[k];
            }
            out[i] = if *relu && acc < 0.0 { 0.0 } else { acc };
        }
        h = out;
    }
    h
}

pub fn raw_layers(net: &Network) -> Vec<RawLayer> {
    net.layers()
        .iter()
        .map(|l| (l.weights.clone(), l.bias.clone(), l.activation == Activation::Relu))
        .collect()
}

pub fn reference_margin(task: &VerificationTask, x: &[f64]) -> Vec<f64> {
    let logits = reference_forward(&raw_layers(&task.network), x);
    task.spec
        .iter()
        .map(|row| row.iter().zip(&logits).map(|(c, y)| c * y).sum())
        .collect()
}

pub fn min_margin(task: &VerificationTask, x: &[f64]) -> f64 {
    reference_margin(task, x).into_iter().fold(f64::INFINITY, f64::min)
}

/// Random ReLU network with uniform weights in `[-scale, scale]`.
pub fn random_network(rng: &mut ChaCha8Rng, input_dim: usize, hidden: &[usize], outputs: usize, scale: f64) -> Network {
    let mut layers = Vec::new();
    let mut fan_in = input_dim;
    let dims: Vec<(usize, Activation)> = hidden
        .iter()
        .map(|&w| (w, Activation::Relu))
        .chain(std::iter::once((outputs, Activation::Linear)))
        .collect();
    for (out, activation) in dims {
        let s = scale / (fan_in as f64).sqrt();
        layers.push(Layer {
            weights: (0..out)
                .map(|_| (0..fan_in).map(|_| rng.random_range(-s..s)).collect())
                .collect(),
            bias: (0..out).map(|_| rng.random_range(-0.5..0.5)).collect(),
            activation,
        });
        fan_in = out;
    }
    Network::new(input_dim, layers).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> InputBox {
    let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    InputBox::new(
        center.iter().map(|c| c - half_width).collect(),
        center.iter().map(|c| c + half_width).collect(),
    )
}

pub fn random_task(rng: &mut ChaCha8Rng, input_dim: usize, hidden: &[usize], outputs: usize, eps: f64) -> VerificationTask {
    let net = random_network(rng, input_dim, hidden, outputs, 2.0);
    let b = random_box(rng, input_dim, eps);
    let spec = (0..rng.random_range(1..=2))
        .map(|_| (0..outputs).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    VerificationTask::new(net, b, spec).unwrap()
}

pub fn sample_in(rng: &mut ChaCha8Rng, b: &InputBox) -> Vec<f64> {
    b.lower
        .iter()
        .zip(&b.upper)
        .map(|(&lo, &hi)| lo + rng.random::<f64>() * (hi - lo))
        .collect()
}

/// Single ReLU followed by `out = relu + offset`, on `[-1, 1]`.
pub fn shifted_relu(offset: f64) -> VerificationTask {
    let net = Network::new(
        1,
        vec![
            Layer {
                weights: vec![vec![1.0]],
                bias: vec![0.0],
                activation: Activation::Relu,
            },
            Layer {
                weights: vec![vec![1.0]],
                bias: vec![offset],
                activation: Activation::Linear,
            },
        ],
    )
    .unwrap();
    VerificationTask::new(net, InputBox::new(vec![-1.0], vec![1.0]), vec![vec![1.0]]).unwrap()
}

/// Seeded oracle-sized instances from the instance generator, keeping only
/// those inside the oracle budget.
pub fn oracle_instances(seed: u64, count: usize) -> Vec<VerificationTask> {
    use drgbab::cli::gen::{generate_suite, GenParams};
    let params = GenParams {
        seed,
        input_dim: 2,
        hidden: vec![8, 8],
        classes: 3,
        count: count * 2,
        eps: 0.5,
        weight_scale: 1.0,
    };
    generate_suite(&params)
        .into_iter()
        .filter(|t| drgbab::oracle::unstable_count(t) <= drgbab::oracle::MAX_UNSTABLE)
        .take(count)
        .collect()
}
