//! Closed-form witness extraction and concrete validation.
//!
//! The linear lower bound `w·x + b` is minimized over the box coordinate by
//! coordinate: `x*_k` is the lower end when `w_k >= 0` and the upper end
//! otherwise. The point is then run through the concrete network. If some
//! margin row is non-positive the property is falsified; otherwise the point
//! is a spurious witness and drives branching.

use serde::{Deserialize, Serialize};

use crate::model::{InputBox, Network};
use crate::relax::{linear_value, BoundResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    ConcreteViolation,
    Spurious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x_star: Vec<f64>,
    /// `w·x* + b` for the bound the witness was built from.
    pub abstract_margin: f64,
    /// `C · f(x*)`, one entry per specification row.
    pub concrete_margin: Vec<f64>,
    pub kind: WitnessKind,
}

impl Witness {
    pub fn is_violation(&self) -> bool {
        self.kind == WitnessKind::ConcreteViolation
    }

    pub fn min_concrete_margin(&self) -> f64 {
        self.concrete_margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Minimizer of `w·x` over the box; zero coefficients take the lower end.
pub fn construct_witness(w: &[f64], input_box: &InputBox) -> Vec<f64> {
    w.iter()
        .zip(input_box.lower.iter().zip(&input_box.upper))
        .map(|(&wk, (&lo, &hi))| if wk >= 0.0 { lo } else { hi })
        .collect()
}

/// Evaluates the concrete margin at `x_star` and classifies it.
pub fn validate_witness(net: &Network, spec: &[Vec<f64>], x_star: Vec<f64>, abstract_margin: f64) -> Witness {
    let concrete_margin = net.margin_unchecked(spec, &x_star);
    let kind = if concrete_margin.iter().any(|&m| m <= 0.0) {
        WitnessKind::ConcreteViolation
    } else {
        WitnessKind::Spurious
    };
    Witness {
        x_star,
        abstract_margin,
        concrete_margin,
        kind,
    }
}

/// Builds and validates the witness of a bound in one step.
pub fn witness_from_bound(net: &Network, spec: &[Vec<f64>], bound: &BoundResult, input_box: &InputBox) -> Witness {
    let x_star = construct_witness(&bound.w, input_box);
    let abstract_margin = linear_value(&bound.w, bound.b, &x_star);
    validate_witness(net, spec, x_star, abstract_margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};
    use crate::relax::concretize;

    fn shifted_relu(offset: f64) -> Network {
        Network::new(
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
        .unwrap()
    }

    #[test]
    fn sign_rule() {
        let unit = InputBox::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert_eq!(construct_witness(&[1.0, -2.0], &unit), vec![0.0, 1.0]);
        let b = InputBox::new(vec![-3.0, 2.0], vec![5.0, 7.0]);
        assert_eq!(construct_witness(&[0.0, 0.0], &b), vec![-3.0, 2.0]);
    }

    #[test]
    fn minimizer_is_bit_exact() {
        let b = InputBox::new(vec![-0.3, 0.1, -2.0], vec![0.7, 0.4, 1.5]);
        let w = [0.123, -4.56, 0.0];
        let x = construct_witness(&w, &b);
        assert_eq!(linear_value(&w, 0.77, &x), concretize(&w, 0.77, &b));
    }

    #[test]
    fn classification() {
        let v = validate_witness(&shifted_relu(-0.5), &[vec![1.0]], vec![-1.0], -0.5);
        assert_eq!(v.kind, WitnessKind::ConcreteViolation);
        assert_eq!(v.concrete_margin, vec![-0.5]);
        let s = validate_witness(&shifted_relu(0.1), &[vec![1.0]], vec![-1.0], -0.4);
        assert_eq!(s.kind, WitnessKind::Spurious);
        assert_eq!(s.concrete_margin, vec![0.1]);
    }

    #[test]
    fn zero_margin_counts_as_violation() {
        let v = validate_witness(&shifted_relu(0.0), &[vec![1.0]], vec![-1.0], -1.0);
        assert!(v.is_violation());
    }
}
