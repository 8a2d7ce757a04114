//! Linear relaxation bounds (CROWN-style backward propagation).
//!
//! Every unstable ReLU `l < 0 < u` is replaced by the triangle relaxation:
//! the chord through `(l, 0)` and `(u, u)` from above and `alpha * z` from
//! below. A linear objective over some layer is pushed backwards through the
//! network; at each ReLU the sign of the incoming coefficient decides which
//! side of the triangle is used (non-negative coefficient: lower line,
//! negative: chord, whose intercept is accumulated into the offset). The
//! result is a linear function `w·x + b` that lower-bounds the objective on
//! the sub-domain, and its minimum over the input box.
//!
//! The same backward pass gives pre-activation bounds for every hidden
//! neuron (objective `±z_j`), and an exact gradient of the concretized bound
//! with respect to the `alpha` slopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bab::{Sign, SplitSet};
use crate::model::{InputBox, Network};

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("relaxation requested for a stable neuron (l = {lower}, u = {upper})")]
    StableNeuron { lower: f64, upper: f64 },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
}

/// Pre-activation interval of a single neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StableActive,
    StableInactive,
    Unstable,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// `l = 0` counts as active and `u = 0` as inactive.
    pub fn stability(&self) -> Stability {
        if self.lower >= 0.0 {
            Stability::StableActive
        } else if self.upper <= 0.0 {
            Stability::StableInactive
        } else {
            Stability::Unstable
        }
    }

    pub fn is_unstable(&self) -> bool {
        self.stability() == Stability::Unstable
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Pre-activation intervals for every hidden layer. Layer `i` (1-based) is
/// stored at position `i - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    layers: Vec<Vec<Interval>>,
}

impl NeuronBounds {
    pub fn from_layers(layers: Vec<Vec<Interval>>) -> Self {
        Self { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &[Interval] {
        &self.layers[layer - 1]
    }

    pub fn get(&self, layer: usize, neuron: usize) -> Interval {
        self.layers[layer - 1][neuron]
    }

    pub fn layers(&self) -> &[Vec<Interval>] {
        &self.layers
    }

    /// `false` if some interval is empty, i.e. the split constraints cannot
    /// all hold inside the box.
    pub fn is_feasible(&self) -> bool {
        self.layers.iter().flatten().all(|iv| !iv.is_empty())
    }

    /// Unstable ReLU neurons as `(layer, neuron)` pairs, layer-major.
    pub fn unstable_neurons(&self, net: &Network) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if !net.is_relu(idx + 1) {
                continue;
            }
            for (j, iv) in layer.iter().enumerate() {
                if iv.is_unstable() {
                    out.push((idx + 1, j));
                }
            }
        }
        out
    }

    pub fn unstable_count(&self, net: &Network) -> usize {
        self.unstable_neurons(net).len()
    }

    fn clamp(&mut self, layer: usize, splits: &SplitSet) {
        for (neuron, sign) in splits.in_layer(layer) {
            let iv = &mut self.layers[layer - 1][neuron];
            match sign {
                Sign::Active => iv.lower = iv.lower.max(0.0),
                Sign::Inactive => iv.upper = iv.upper.min(0.0),
            }
        }
    }
}

/// Lower-bound slopes, one per hidden neuron (only those of unstable ReLUs
/// are ever read).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    alpha: Vec<Vec<f64>>,
}

impl RelaxationParams {
    /// Adaptive initialization: `alpha = 1` if `u >= |l|`, else `0`.
    pub fn adaptive(bounds: &NeuronBounds) -> Self {
        Self {
            alpha: bounds
                .layers
                .iter()
                .map(|layer| layer.iter().map(adaptive_slope).collect())
                .collect(),
        }
    }

    pub fn uniform(widths: &[usize], value: f64) -> Self {
        Self {
            alpha: widths.iter().map(|&n| vec![value; n]).collect(),
        }
    }

    pub fn get(&self, layer: usize, neuron: usize) -> f64 {
        self.alpha[layer - 1][neuron]
    }

    /// Sets one slope, projecting it onto `[0, 1]`.
    pub fn set(&mut self, layer: usize, neuron: usize, value: f64) {
        self.alpha[layer - 1][neuron] = value.clamp(0.0, 1.0);
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.iter().flatten().all(|a| (0.0..=1.0).contains(a))
    }
}

fn adaptive_slope(iv: &Interval) -> f64 {
    if iv.upper >= -iv.lower {
        1.0
    } else {
        0.0
    }
}

/// Triangle relaxation of an unstable ReLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    pub upper_slope: f64,
    pub upper_intercept: f64,
    pub lower_slope: f64,
}

impl ReluRelaxation {
    pub fn upper(&self, z: f64) -> f64 {
        self.upper_slope * z + self.upper_intercept
    }

    pub fn lower(&self, z: f64) -> f64 {
        self.lower_slope * z
    }
}

/// Chord slope and intercept for `l < 0 < u`.
#[inline]
pub(crate) fn chord(lower: f64, upper: f64) -> (f64, f64) {
    let width = upper - lower;
    (upper / width, -upper * lower / width)
}

pub fn relu_relaxation(lower: f64, upper: f64, alpha: f64) -> Result<ReluRelaxation, RelaxError> {
    if !(lower < 0.0 && 0.0 < upper) {
        return Err(RelaxError::StableNeuron { lower, upper });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RelaxError::AlphaOutOfRange(alpha));
    }
    let (upper_slope, upper_intercept) = chord(lower, upper);
    Ok(ReluRelaxation {
        upper_slope,
        upper_intercept,
        lower_slope: alpha,
    })
}

/// A sound linear lower bound `w·x + b` of one specification row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub w: Vec<f64>,
    pub b: f64,
    /// `min` of `w·x + b` over the input box.
    pub lower_bound: f64,
    /// Backward coefficient multiplying each post-activation, indexed by
    /// layer: entry 0 is the input layer (equal to `w`), entry `i` is hidden
    /// layer `i`.
    pub sensitivities: Vec<Vec<f64>>,
    pub neuron_bounds: NeuronBounds,
}

impl BoundResult {
    /// Sensitivity of hidden neuron `(layer, neuron)`.
    pub fn sensitivity(&self, layer: usize, neuron: usize) -> f64 {
        self.sensitivities[layer][neuron]
    }
}

/// `sum_k min(w_k lo_k, w_k hi_k) + b`, summed left to right.
pub fn concretize(w: &[f64], b: f64, input_box: &InputBox) -> f64 {
    w.iter()
        .zip(input_box.lower.iter().zip(&input_box.upper))
        .map(|(&wk, (&lo, &hi))| (wk * lo).min(wk * hi))
        .sum::<f64>()
        + b
}

/// `w·x + b`, summed in the same order as [`concretize`].
pub fn linear_value(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(&wk, &xk)| wk * xk).sum::<f64>() + b
}

#[derive(Debug, Clone, Copy)]
enum Slopes<'a> {
    Adaptive,
    Fixed(&'a RelaxationParams),
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    uses_alpha: bool,
}

const IDENTITY: Line = Line {
    slope: 1.0,
    intercept: 0.0,
    uses_alpha: false,
};
const ZERO: Line = Line {
    slope: 0.0,
    intercept: 0.0,
    uses_alpha: false,
};

fn select_line(iv: Interval, alpha: f64, coeff: f64) -> Line {
    match iv.stability() {
        Stability::StableActive => IDENTITY,
        Stability::StableInactive => ZERO,
        Stability::Unstable if coeff >= 0.0 => Line {
            slope: alpha,
            intercept: 0.0,
            uses_alpha: true,
        },
        Stability::Unstable => {
            let (slope, intercept) = chord(iv.lower, iv.upper);
            Line {
                slope,
                intercept,
                uses_alpha: false,
            }
        }
    }
}

struct Backward {
    w: Vec<f64>,
    b: f64,
    sensitivities: Vec<Vec<f64>>,
    lines: Vec<Vec<Line>>,
}

/// Pushes `objective · z^(k)` back to the input. `bounds[i - 1]` must hold
/// the intervals of hidden layer `i` for every `i < k`.
fn backward(
    net: &Network,
    k: usize,
    objective: Vec<f64>,
    bounds: &[Vec<Interval>],
    slopes: Slopes<'_>,
    record: bool,
) -> Backward {
    let mut lambda = objective;
    let mut b = 0.0;
    let mut sensitivities = if record { vec![Vec::new(); k] } else { Vec::new() };
    let mut lines = if record { vec![Vec::new(); k] } else { Vec::new() };
    for i in (1..=k).rev() {
        let layer = net.layer(i);
        b += crate::model::dot(&lambda, &layer.bias);
        let g = layer.pull_back(&lambda);
        if i == 1 {
            if record {
                sensitivities[0] = g.clone();
            }
            return Backward {
                w: g,
                b,
                sensitivities,
                lines,
            };
        }
        let below = i - 1;
        let relu = net.is_relu(below);
        let mut next = Vec::with_capacity(g.len());
        let mut layer_lines = Vec::with_capacity(if record { g.len() } else { 0 });
        for (j, &gj) in g.iter().enumerate() {
            let line = if relu {
                let iv = bounds[below - 1][j];
                let alpha = match slopes {
                    Slopes::Adaptive => adaptive_slope(&iv),
                    Slopes::Fixed(p) => p.get(below, j),
                };
                select_line(iv, alpha, gj)
            } else {
                IDENTITY
            };
            next.push(gj * line.slope);
            if line.intercept != 0.0 {
                b += gj * line.intercept;
            }
            if record {
                layer_lines.push(line);
            }
        }
        if record {
            sensitivities[below] = g;
            lines[below] = layer_lines;
        }
        lambda = next;
    }
    unreachable!("layer 1 always terminates the backward pass")
}

/// Sound lower bound of `c_row · f(x)` over the input box, given
/// pre-activation bounds for the sub-domain. Returns `None` when the bounds
/// are infeasible.
pub fn compute_bounds(
    net: &Network,
    c_row: &[f64],
    input_box: &InputBox,
    bounds: &NeuronBounds,
    params: &RelaxationParams,
) -> Option<BoundResult> {
    if !bounds.is_feasible() {
        return None;
    }
    Some(run_bound(net, c_row, input_box, bounds, params).0)
}

fn run_bound(
    net: &Network,
    c_row: &[f64],
    input_box: &InputBox,
    bounds: &NeuronBounds,
    params: &RelaxationParams,
) -> (BoundResult, Vec<Vec<Line>>) {
    let pass = backward(
        net,
        net.depth(),
        c_row.to_vec(),
        &bounds.layers,
        Slopes::Fixed(params),
        true,
    );
    let lower_bound = concretize(&pass.w, pass.b, input_box);
    (
        BoundResult {
            w: pass.w,
            b: pass.b,
            lower_bound,
            sensitivities: pass.sensitivities,
            neuron_bounds: bounds.clone(),
        },
        pass.lines,
    )
}

/// Bound plus the gradient of `lower_bound` with respect to every alpha.
///
/// With the relaxation choices fixed, the bound is linear in the backward
/// coefficients, and its derivative with respect to the coefficient on
/// `z_j^(i)` is the value of `z_j^(i)` in the relaxed network evaluated at
/// the box minimizer along the chosen lines. The alpha derivative is that
/// value times the incoming coefficient, for neurons on their lower line.
pub fn alpha_gradient(
    net: &Network,
    c_row: &[f64],
    input_box: &InputBox,
    bounds: &NeuronBounds,
    params: &RelaxationParams,
) -> Option<(BoundResult, Vec<Vec<f64>>)> {
    if !bounds.is_feasible() {
        return None;
    }
    let (result, lines) = run_bound(net, c_row, input_box, bounds, params);
    let mut post: Vec<f64> = result
        .w
        .iter()
        .zip(input_box.lower.iter().zip(&input_box.upper))
        .map(|(&wk, (&lo, &hi))| if wk >= 0.0 { lo } else { hi })
        .collect();
    let mut grad = Vec::with_capacity(net.hidden_depth());
    for i in 1..=net.hidden_depth() {
        let pre = net.layer(i).affine(&post);
        let g = &result.sensitivities[i];
        let mut layer_grad = vec![0.0; pre.len()];
        post = pre
            .iter()
            .zip(&lines[i])
            .enumerate()
            .map(|(j, (&v, line))| {
                if line.uses_alpha {
                    layer_grad[j] = g[j] * v;
                }
                line.slope * v + line.intercept
            })
            .collect();
        grad.push(layer_grad);
    }
    Some((result, grad))
}

/// Pre-activation bounds for every hidden layer, computed front to back with
/// split clamps applied as each layer is finished. With `params = None` the
/// lower slopes are the adaptive defaults.
pub fn compute_intermediate_bounds(
    net: &Network,
    input_box: &InputBox,
    splits: &SplitSet,
    params: Option<&RelaxationParams>,
) -> NeuronBounds {
    refine_intermediate_bounds(net, input_box, splits, params, None, 1)
}

/// Recomputes layers `from_layer..` and intersects them with `prior`;
/// earlier layers are copied from `prior`. Split clamps are re-applied on
/// every layer.
pub(crate) fn refine_intermediate_bounds(
    net: &Network,
    input_box: &InputBox,
    splits: &SplitSet,
    params: Option<&RelaxationParams>,
    prior: Option<&NeuronBounds>,
    from_layer: usize,
) -> NeuronBounds {
    let hidden = net.hidden_depth();
    let slopes = params.map_or(Slopes::Adaptive, Slopes::Fixed);
    let mut out = NeuronBounds {
        layers: Vec::with_capacity(hidden),
    };
    for i in 1..=hidden {
        if i < from_layer {
            let prior = prior.expect("prior bounds required when skipping layers");
            out.layers.push(prior.layers[i - 1].clone());
        } else {
            let n = net.layer(i).out_dim();
            let mut layer = Vec::with_capacity(n);
            for j in 0..n {
                let mut unit = vec![0.0; n];
                unit[j] = 1.0;
                let lo = backward(net, i, unit.clone(), &out.layers, slopes, false);
                let lower = concretize(&lo.w, lo.b, input_box);
                unit[j] = -1.0;
                let hi = backward(net, i, unit, &out.layers, slopes, false);
                let upper = -concretize(&hi.w, hi.b, input_box);
                let mut iv = Interval::new(lower, upper);
                if let Some(p) = prior {
                    let old = p.layers[i - 1][j];
                    iv.lower = iv.lower.max(old.lower);
                    iv.upper = iv.upper.min(old.upper);
                }
                layer.push(iv);
            }
            out.layers.push(layer);
        }
        out.clamp(i, splits);
    }
    out
}

/// Projected gradient ascent on the alpha slopes, keeping the best iterate.
///
/// `step` is the largest per-coordinate move of a single iteration; it grows
/// after an improving step and halves after a rejected one.
pub fn optimize_alpha(
    net: &Network,
    c_row: &[f64],
    input_box: &InputBox,
    bounds: &NeuronBounds,
    init: &RelaxationParams,
    iters: usize,
    step: f64,
) -> RelaxationParams {
    let mut best = init.clone();
    if iters == 0 {
        return best;
    }
    let Some((res, mut grad)) = alpha_gradient(net, c_row, input_box, bounds, &best) else {
        return best;
    };
    let mut best_lb = res.lower_bound;
    let mut step = step;
    for _ in 0..iters {
        // Drop components that push a slope further outside [0, 1].
        let mut scale = 0.0f64;
        for (a_layer, g_layer) in best.alpha.iter().zip(grad.iter_mut()) {
            for (a, g) in a_layer.iter().zip(g_layer.iter_mut()) {
                if (*a <= 0.0 && *g < 0.0) || (*a >= 1.0 && *g > 0.0) {
                    *g = 0.0;
                }
                scale = scale.max(g.abs());
            }
        }
        if scale <= 1e-15 || step <= 1e-12 {
            break;
        }
        let mut cand = best.clone();
        for (a_layer, g_layer) in cand.alpha.iter_mut().zip(&grad) {
            for (a, g) in a_layer.iter_mut().zip(g_layer) {
                *a = (*a + step * g / scale).clamp(0.0, 1.0);
            }
        }
        let Some((res, cand_grad)) = alpha_gradient(net, c_row, input_box, bounds, &cand) else {
            break;
        };
        if res.lower_bound > best_lb {
            best = cand;
            best_lb = res.lower_bound;
            grad = cand_grad;
            step = (step * 1.5).min(1.0);
        } else {
            step *= 0.5;
        }
    }
    best
}
