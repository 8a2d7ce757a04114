//! Branching scores for unstable neurons.
//!
//! `drg` multiplies the abstract sensitivity `|A|` by the chord-minus-ReLU
//! gap at the witness, counted only where `A < 0` (the chord is the side of
//! the triangle that slope optimization cannot move). The remaining kinds are
//! comparison variants: a two-sided gap, the same gap at the box center, a
//! location-free intercept score, a concrete-gradient score, a BaBSR-style
//! intercept contribution and plain interval width.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{InputBox, Network};
use crate::relax::{chord, BoundResult, RelaxationParams};

/// Scores at or below this are treated as zero by the fallback logic.
pub const ZERO_SCORE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    Drg,
    DrgSymmetric,
    Babsr,
    Center,
    Intercept,
    Grad,
    Width,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 7] = [
        HeuristicKind::Drg,
        HeuristicKind::DrgSymmetric,
        HeuristicKind::Babsr,
        HeuristicKind::Center,
        HeuristicKind::Intercept,
        HeuristicKind::Grad,
        HeuristicKind::Width,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Drg => "drg",
            HeuristicKind::DrgSymmetric => "drg_symmetric",
            HeuristicKind::Babsr => "babsr",
            HeuristicKind::Center => "center",
            HeuristicKind::Intercept => "intercept",
            HeuristicKind::Grad => "grad",
            HeuristicKind::Width => "width",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown heuristic '{s}' (valid: {})", Self::valid_names()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchScore {
    pub layer: usize,
    pub neuron: usize,
    pub score: f64,
}

/// Scores for every splittable neuron, plus how many gap evaluations were
/// negative before clamping (the witness left the neuron's interval).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<BranchScore>,
    pub clamp_events: usize,
}

impl ScoreSet {
    pub fn all_zero(&self) -> bool {
        self.scores.iter().all(|s| s.score <= ZERO_SCORE)
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().map(|s| s.score).fold(0.0, f64::max)
    }
}

/// Chord value minus ReLU at `z`, unclamped.
#[inline]
fn upper_gap(z: f64, lower: f64, upper: f64) -> f64 {
    let (slope, intercept) = chord(lower, upper);
    slope * z + intercept - z.max(0.0)
}

/// Gap between the chord and the ReLU at `z_star`, counted only for a
/// negative coefficient and clamped below at zero.
pub fn directional_gap(a: f64, z_star: f64, lower: f64, upper: f64) -> f64 {
    if a >= 0.0 {
        0.0
    } else {
        upper_gap(z_star, lower, upper).max(0.0)
    }
}

#[derive(Default)]
struct Collector {
    set: ScoreSet,
}

impl Collector {
    fn gap(&mut self, raw: f64) -> f64 {
        if raw < 0.0 {
            self.set.clamp_events += 1;
            0.0
        } else {
            raw
        }
    }

    fn push(&mut self, layer: usize, neuron: usize, score: f64) {
        self.set.scores.push(BranchScore { layer, neuron, score });
    }
}

fn splittable(net: &Network, bound: &BoundResult) -> Vec<(usize, usize)> {
    bound.neuron_bounds.unstable_neurons(net)
}

/// `|A| · gap(z*)` with the gap masked to `A < 0`. `preacts` are concrete
/// pre-activations (`z^(1) ..`) at the evaluation point.
fn directional_scores(net: &Network, bound: &BoundResult, preacts: &[Vec<f64>]) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        let a = bound.sensitivity(layer, neuron);
        let iv = bound.neuron_bounds.get(layer, neuron);
        let score = if a < 0.0 {
            let g = c.gap(upper_gap(preacts[layer - 1][neuron], iv.lower, iv.upper));
            a.abs() * g
        } else {
            0.0
        };
        c.push(layer, neuron, score);
    }
    c.set
}

pub fn drg_score(net: &Network, bound: &BoundResult, witness_preacts: &[Vec<f64>]) -> ScoreSet {
    directional_scores(net, bound, witness_preacts)
}

/// Both sides of the triangle: the chord gap where `A < 0` and the gap
/// above the `alpha` line where `A >= 0`.
pub fn symmetric_score(
    net: &Network,
    bound: &BoundResult,
    witness_preacts: &[Vec<f64>],
    params: &RelaxationParams,
) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        let a = bound.sensitivity(layer, neuron);
        let iv = bound.neuron_bounds.get(layer, neuron);
        let z = witness_preacts[layer - 1][neuron];
        let raw = if a < 0.0 {
            upper_gap(z, iv.lower, iv.upper)
        } else {
            z.max(0.0) - params.get(layer, neuron) * z
        };
        let g = c.gap(raw);
        c.push(layer, neuron, a.abs() * g);
    }
    c.set
}

/// Directional score evaluated at the box center instead of the witness.
pub fn center_score(net: &Network, bound: &BoundResult, center_preacts: &[Vec<f64>]) -> ScoreSet {
    directional_scores(net, bound, center_preacts)
}

/// `|A| · I(A < 0) · chord intercept`.
pub fn intercept_score(net: &Network, bound: &BoundResult) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        let a = bound.sensitivity(layer, neuron);
        let iv = bound.neuron_bounds.get(layer, neuron);
        let score = if a < 0.0 {
            a.abs() * chord(iv.lower, iv.upper).1
        } else {
            0.0
        };
        c.push(layer, neuron, score);
    }
    c.set
}

/// Concrete partial derivative of the margin with respect to each neuron's
/// pre-activation, substituted for `A` in both the magnitude and the sign
/// mask. `margin_grad[i - 1]` is `dm/dz^(i)`.
pub fn grad_score(
    net: &Network,
    bound: &BoundResult,
    witness_preacts: &[Vec<f64>],
    margin_grad: &[Vec<f64>],
) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        let d = margin_grad[layer - 1][neuron];
        let iv = bound.neuron_bounds.get(layer, neuron);
        let score = if d < 0.0 {
            let g = c.gap(upper_gap(witness_preacts[layer - 1][neuron], iv.lower, iv.upper));
            d.abs() * g
        } else {
            0.0
        };
        c.push(layer, neuron, score);
    }
    c.set
}

/// `|A · u·l / (u - l)|`, the size of the chord intercept's contribution to
/// the bound if the coefficient were negative.
pub fn babsr_score(net: &Network, bound: &BoundResult) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        let a = bound.sensitivity(layer, neuron);
        let iv = bound.neuron_bounds.get(layer, neuron);
        let score = (a * iv.upper * iv.lower / (iv.upper - iv.lower)).abs();
        c.push(layer, neuron, score);
    }
    c.set
}

pub fn width_score(net: &Network, bound: &BoundResult) -> ScoreSet {
    let mut c = Collector::default();
    for (layer, neuron) in splittable(net, bound) {
        c.push(layer, neuron, bound.neuron_bounds.get(layer, neuron).width());
    }
    c.set
}

/// `dm/dz^(i)` for every hidden layer at `x`, with ReLU subgradient 0 at 0.
pub fn concrete_margin_gradient(net: &Network, c_row: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let (_, preacts) = net.forward_unchecked(x);
    let depth = net.depth();
    let mut grads = vec![Vec::new(); depth - 1];
    let mut delta = c_row.to_vec();
    for i in (2..=depth).rev() {
        let post_grad = net.layer(i).pull_back(&delta);
        let below = i - 1;
        delta = if net.is_relu(below) {
            post_grad
                .iter()
                .zip(&preacts[below - 1])
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect()
        } else {
            post_grad
        };
        grads[below - 1] = delta.clone();
    }
    grads
}

/// Everything a heuristic may read at one node.
pub struct ScoringInput<'a> {
    pub net: &'a Network,
    pub c_row: &'a [f64],
    pub input_box: &'a InputBox,
    pub bound: &'a BoundResult,
    pub witness: &'a [f64],
    pub params: &'a RelaxationParams,
}

pub fn score(kind: HeuristicKind, input: &ScoringInput<'_>) -> ScoreSet {
    let witness_preacts = || input.net.forward_unchecked(input.witness).1;
    match kind {
        HeuristicKind::Drg => drg_score(input.net, input.bound, &witness_preacts()),
        HeuristicKind::DrgSymmetric => {
            symmetric_score(input.net, input.bound, &witness_preacts(), input.params)
        }
        HeuristicKind::Babsr => babsr_score(input.net, input.bound),
        HeuristicKind::Center => {
            let center = input.net.forward_unchecked(&input.input_box.center()).1;
            center_score(input.net, input.bound, &center)
        }
        HeuristicKind::Intercept => intercept_score(input.net, input.bound),
        HeuristicKind::Grad => {
            let grad = concrete_margin_gradient(input.net, input.c_row, input.witness);
            grad_score(input.net, input.bound, &witness_preacts(), &grad)
        }
        HeuristicKind::Width => width_score(input.net, input.bound),
    }
}

/// Highest score; ties go to the lowest layer, then the lowest neuron.
/// `None` when there is nothing to split.
pub fn select_branch(scores: &[BranchScore]) -> Option<(usize, usize)> {
    scores
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| (b.layer, b.neuron).cmp(&(a.layer, a.neuron)))
        })
        .map(|s| (s.layer, s.neuron))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};
    use crate::relax::{Interval, NeuronBounds};

    /// Two unstable neurons A, B with unit output weights, bounds
    /// `[-2, 18]` and `[-4, 4]`, sensitivities -1.
    fn case_study() -> (Network, BoundResult, Vec<Vec<f64>>) {
        let net = Network::new(
            2,
            vec![
                Layer {
                    weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    bias: vec![0.0, 0.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![-1.0, -1.0]],
                    bias: vec![0.0],
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap();
        let bound = BoundResult {
            w: vec![0.0, 0.0],
            b: 0.0,
            lower_bound: 0.0,
            sensitivities: vec![vec![0.0, 0.0], vec![-1.0, -1.0]],
            neuron_bounds: NeuronBounds::from_layers(vec![vec![
                Interval::new(-2.0, 18.0),
                Interval::new(-4.0, 4.0),
            ]]),
        };
        let preacts = vec![vec![8.0, 0.0], vec![0.0]];
        (net, bound, preacts)
    }

    #[test]
    fn directional_gap_case_study() {
        assert!((directional_gap(-1.0, 8.0, -2.0, 18.0) - 1.0).abs() < 1e-12);
        assert!((directional_gap(-1.0, 0.0, -4.0, 4.0) - 2.0).abs() < 1e-12);
        assert_eq!(directional_gap(1.0, 0.0, -4.0, 4.0), 0.0);
        assert_eq!(directional_gap(0.0, 3.0, -4.0, 4.0), 0.0);
    }

    #[test]
    fn gap_is_clamped_outside_interval() {
        assert_eq!(directional_gap(-1.0, 10.0, -1.0, 1.0), 0.0);
        assert_eq!(directional_gap(-1.0, -10.0, -1.0, 1.0), 0.0);
    }

    #[test]
    fn drg_prefers_narrow_neuron_width_prefers_wide() {
        let (net, bound, preacts) = case_study();
        let drg = drg_score(&net, &bound, &preacts);
        assert_eq!(select_branch(&drg.scores), Some((1, 1)));
        let width = width_score(&net, &bound);
        assert_eq!(width.scores[0].score, 20.0);
        assert_eq!(width.scores[1].score, 8.0);
        assert_eq!(select_branch(&width.scores), Some((1, 0)));
    }

    #[test]
    fn intercept_and_babsr() {
        let (net, bound, _) = case_study();
        let s = intercept_score(&net, &bound);
        assert!((s.scores[0].score - 1.8).abs() < 1e-12);
        let b = babsr_score(&net, &bound);
        assert!((b.scores[0].score - 1.8).abs() < 1e-12);
        assert!((b.scores[1].score - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_lower_side() {
        let (net, mut bound, _) = case_study();
        bound.neuron_bounds = NeuronBounds::from_layers(vec![vec![
            Interval::new(-2.0, 2.0),
            Interval::new(-2.0, 2.0),
        ]]);
        bound.sensitivities[1] = vec![1.0, -1.0];
        let params = RelaxationParams::uniform(&[2], 0.5);
        let preacts = vec![vec![-1.0, -1.0], vec![0.0]];
        let s = symmetric_score(&net, &bound, &preacts, &params);
        assert!((s.scores[0].score - 0.5).abs() < 1e-12);
        let d = drg_score(&net, &bound, &preacts);
        assert_eq!(d.scores[0].score, 0.0);
        assert_eq!(s.scores[1].score, d.scores[1].score);
    }

    #[test]
    fn positive_sensitivities_give_zero_drg() {
        let (net, mut bound, preacts) = case_study();
        bound.sensitivities[1] = vec![1.0, 0.0];
        assert!(drg_score(&net, &bound, &preacts).all_zero());
    }

    #[test]
    fn select_branch_ties_and_empty() {
        let s = [
            BranchScore { layer: 2, neuron: 0, score: 1.0 },
            BranchScore { layer: 1, neuron: 3, score: 1.0 },
            BranchScore { layer: 1, neuron: 2, score: 1.0 },
        ];
        assert_eq!(select_branch(&s), Some((1, 2)));
        assert_eq!(select_branch(&[]), None);
    }

    #[test]
    fn parse_kinds() {
        for k in HeuristicKind::ALL {
            assert_eq!(k.name().parse::<HeuristicKind>().unwrap(), k);
        }
        let err = "nonsense".parse::<HeuristicKind>().unwrap_err();
        assert!(err.contains("drg_symmetric"));
    }

    #[test]
    fn margin_gradient_masks_inactive() {
        let (net, _, _) = case_study();
        let g = concrete_margin_gradient(&net, &[1.0], &[3.0, -1.0]);
        assert_eq!(g, vec![vec![-1.0, 0.0]]);
    }
}
