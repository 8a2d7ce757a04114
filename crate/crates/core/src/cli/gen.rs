//! Seeded random instances.
//!
//! Each instance draws an anchor uniformly from `[-1, 1]^n0`, surrounds it
//! with a box of half-width `eps`, samples He-style Gaussian weights scaled
//! by `weight_scale`, and asks that the anchor's predicted class beat every
//! other class over the box.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{save_task, Activation, InputBox, Layer, Network, VerificationTask};

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of hidden ReLU layers.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Hidden widths: one per layer, or a single value used for all.
    #[arg(long, default_value = "8")]
    pub widths: String,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Half-width of the input box.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_scale: f64,
    #[arg(long, default_value_t = 2)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value = "suite")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub count: usize,
    pub eps: f64,
    pub weight_scale: f64,
}

impl GenParams {
    pub fn from_args(args: &GenArgs) -> Result<Self, String> {
        let widths: Vec<usize> = args
            .widths
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("--widths: '{s}': {e}"))
            })
            .collect::<Result<_, _>>()?;
        let hidden = match widths.len() {
            1 => vec![widths[0]; args.layers],
            n if n == args.layers => widths,
            n => {
                return Err(format!(
                    "--widths lists {n} values but --layers is {}",
                    args.layers
                ))
            }
        };
        let params = Self {
            seed: args.seed,
            input_dim: args.input_dim,
            hidden,
            classes: args.classes,
            count: args.count,
            eps: args.eps,
            weight_scale: args.weight_scale,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden.is_empty() {
            return Err("--layers must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return Err("--widths must be positive".into());
        }
        if self.input_dim == 0 {
            return Err("--input-dim must be positive".into());
        }
        if self.classes < 2 {
            return Err("--classes must be at least 2".into());
        }
        if self.count == 0 {
            return Err("--count must be positive".into());
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(format!("--eps must be positive and finite, got {}", self.eps));
        }
        if !(self.weight_scale.is_finite() && self.weight_scale > 0.0) {
            return Err(format!(
                "--weight-scale must be positive and finite, got {}",
                self.weight_scale
            ));
        }
        Ok(())
    }
}

fn random_layer(rng: &mut ChaCha8Rng, fan_in: usize, out: usize, scale: f64, activation: Activation) -> Layer {
    let normal = Normal::new(0.0, scale / (fan_in as f64).sqrt()).expect("positive std");
    let weights = (0..out)
        .map(|_| (0..fan_in).map(|_| normal.sample(rng)).collect())
        .collect();
    let bias = (0..out).map(|_| (rng.random::<f64>() - 0.5) * scale).collect();
    Layer {
        weights,
        bias,
        activation,
    }
}

pub fn generate_instance(rng: &mut ChaCha8Rng, p: &GenParams) -> VerificationTask {
    let mut layers = Vec::with_capacity(p.hidden.len() + 1);
    let mut fan_in = p.input_dim;
    for &w in &p.hidden {
        layers.push(random_layer(rng, fan_in, w, p.weight_scale, Activation::Relu));
        fan_in = w;
    }
    layers.push(random_layer(rng, fan_in, p.classes, p.weight_scale, Activation::Linear));
    let net = Network::new(p.input_dim, layers).expect("generated shapes chain");

    let anchor: Vec<f64> = (0..p.input_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let (logits, _) = net.forward(&anchor).expect("finite anchor");
    let label = logits
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > logits[best] { k } else { best });
    let spec = (0..p.classes)
        .filter(|&j| j != label)
        .map(|j| {
            let mut row = vec![0.0; p.classes];
            row[label] = 1.0;
            row[j] = -1.0;
            row
        })
        .collect();
    let input_box = InputBox::new(
        anchor.iter().map(|a| a - p.eps).collect(),
        anchor.iter().map(|a| a + p.eps).collect(),
    );
    VerificationTask::new(net, input_box, spec).expect("generated task is valid")
}

pub fn generate_suite(p: &GenParams) -> Vec<VerificationTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (0..p.count).map(|_| generate_instance(&mut rng, p)).collect()
}

pub fn instance_name(index: usize) -> String {
    format!("inst_{index:04}")
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), String> {
    let params = GenParams::from_args(args)?;
    fs::create_dir_all(&args.output).map_err(|e| format!("{}: {e}", args.output.display()))?;
    for (i, task) in generate_suite(&params).iter().enumerate() {
        let name = instance_name(i);
        save_task(
            task,
            &args.output.join(format!("{name}_model.json")),
            &args.output.join(format!("{name}_spec.json")),
        )
        .map_err(|e| e.to_string())?;
    }
    println!("wrote {} instances to {}", params.count, args.output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GenParams {
        GenParams {
            seed: 7,
            input_dim: 2,
            hidden: vec![4, 3],
            classes: 3,
            count: 4,
            eps: 0.1,
            weight_scale: 1.0,
        }
    }

    #[test]
    fn anchor_satisfies_spec() {
        for task in generate_suite(&params()) {
            let center = task.input_box.center();
            assert!(task.margin(&center).unwrap().iter().all(|&m| m >= 0.0));
            assert_eq!(task.spec.len(), 2);
            assert_eq!(task.network.hidden_widths(), vec![4, 3]);
        }
    }

    #[test]
    fn same_seed_same_suite() {
        assert_eq!(generate_suite(&params()), generate_suite(&params()));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut p = params();
        p.hidden = vec![4, 0];
        assert!(p.validate().is_err());
        p = params();
        p.eps = -1.0;
        assert!(p.validate().is_err());
    }
}
