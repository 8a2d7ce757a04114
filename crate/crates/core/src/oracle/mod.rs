//! Ground truth for tiny instances.
//!
//! [`exact_min_margin`] fixes every ReLU that interval arithmetic cannot
//! decide to each of its two phases in turn. Under a full pattern the network
//! is affine, and each pattern region is a polytope (the box intersected
//! with one halfspace per fixed neuron), so the margin minimum over a region
//! is a small linear program. The enumeration descends layer by layer and
//! discards partial patterns whose region is already empty.
//!
//! [`grid_attack`] is a sampling falsifier used to cross-check `Safe`
//! verdicts on instances too large for enumeration.

pub mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{dot, InputBox, Network, VerificationTask};
use simplex::{minimize, LpOutcome};

pub const MAX_UNSTABLE: usize = 14;
pub const MAX_INPUTS: usize = 6;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{count} input dimensions exceed the oracle budget of {max}")]
    TooManyInputs { count: usize, max: usize },
    #[error("{count} undecided ReLUs exceed the oracle budget of {max}")]
    TooManyUnstable { count: usize, max: usize },
    #[error("linear program unbounded on a bounded region")]
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_unstable: usize,
    pub max_inputs: usize,
    /// Skip regions whose interior is empty.
    pub drop_thin: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_unstable: MAX_UNSTABLE,
            max_inputs: MAX_INPUTS,
            drop_thin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMin {
    /// Minimum over the box and over specification rows of the margin.
    pub min_value: f64,
    pub argmin: Vec<f64>,
    /// Specification row attaining the minimum.
    pub row: usize,
    pub unstable: usize,
    /// Full patterns whose region was non-empty.
    pub regions: usize,
}

impl ExactMin {
    pub fn is_safe(&self) -> bool {
        self.min_value > 0.0
    }
}

/// Interval-arithmetic pre-activation bounds for every layer.
pub fn interval_bounds(net: &Network, input_box: &InputBox) -> Vec<Vec<(f64, f64)>> {
    let mut lo = input_box.lower.clone();
    let mut hi = input_box.upper.clone();
    let mut out = Vec::with_capacity(net.depth());
    for layer in net.layers() {
        let mut zl = Vec::with_capacity(layer.out_dim());
        let mut zu = Vec::with_capacity(layer.out_dim());
        for (row, &b) in layer.weights.iter().zip(&layer.bias) {
            let (mut l, mut u) = (b, b);
            for (&w, (&a, &c)) in row.iter().zip(lo.iter().zip(&hi)) {
                if w >= 0.0 {
                    l += w * a;
                    u += w * c;
                } else {
                    l += w * c;
                    u += w * a;
                }
            }
            zl.push(l);
            zu.push(u);
        }
        out.push(zl.iter().copied().zip(zu.iter().copied()).collect());
        lo = zl.iter().map(|&v| layer.activation.apply(v)).collect();
        hi = zu.iter().map(|&v| layer.activation.apply(v)).collect();
    }
    out
}

/// Number of hidden ReLUs whose interval-arithmetic bounds straddle zero.
pub fn unstable_count(task: &VerificationTask) -> usize {
    let net = &task.network;
    interval_bounds(net, &task.input_box)
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < net.hidden_depth() && net.is_relu(i + 1))
        .map(|(_, layer)| layer.iter().filter(|&&(l, u)| l < 0.0 && u > 0.0).count())
        .sum()
}

/// Affine map `x -> G x + h`.
#[derive(Clone)]
struct Affine {
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl Affine {
    fn identity(n: usize) -> Self {
        let g = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { g, h: vec![0.0; n] }
    }

    fn compose(&self, weights: &[Vec<f64>], bias: &[f64]) -> Self {
        let n0 = self.g.first().map_or(0, Vec::len);
        let mut g = Vec::with_capacity(weights.len());
        let mut h = Vec::with_capacity(weights.len());
        for (row, &b) in weights.iter().zip(bias) {
            let mut gr = vec![0.0; n0];
            let mut hr = b;
            for (&w, (prev, &ph)) in row.iter().zip(self.g.iter().zip(&self.h)) {
                if w != 0.0 {
                    for (acc, &p) in gr.iter_mut().zip(prev) {
                        *acc += w * p;
                    }
                    hr += w * ph;
                }
            }
            g.push(gr);
            h.push(hr);
        }
        Self { g, h }
    }
}

/// Halfspace `a·x <= c` in input coordinates.
#[derive(Clone)]
struct Halfspace {
    a: Vec<f64>,
    c: f64,
}

struct Enumerator<'a> {
    task: &'a VerificationTask,
    ibp: Vec<Vec<(f64, f64)>>,
    options: OracleOptions,
    best: Option<(f64, Vec<f64>, usize)>,
    regions: usize,
}

impl Enumerator<'_> {
    /// Box rows `y <= width` plus the halfspaces, shifted to `y = x - lo`.
    fn lp_rows(&self, cons: &[Halfspace]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let b = &self.task.input_box;
        let n = b.dim();
        let mut a = Vec::with_capacity(n + cons.len());
        let mut rhs = Vec::with_capacity(n + cons.len());
        for k in 0..n {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            a.push(row);
            rhs.push(b.upper[k] - b.lower[k]);
        }
        for h in cons {
            a.push(h.a.clone());
            rhs.push(h.c - dot(&h.a, &b.lower));
        }
        (a, rhs)
    }

    fn feasible(&self, cons: &[Halfspace]) -> bool {
        let n = self.task.input_box.dim();
        let (a, rhs) = self.lp_rows(cons);
        // Relax by a hair so regions touching only through rounding survive.
        let rhs: Vec<f64> = rhs.iter().map(|v| v + FEAS_TOL).collect();
        !matches!(minimize(&vec![0.0; n], &a, &rhs), LpOutcome::Infeasible)
    }

    /// Largest `t <= 1` with a ball-like slack of `t` inside every constraint.
    fn has_interior(&self, cons: &[Halfspace]) -> bool {
        let b = &self.task.input_box;
        let n = b.dim();
        let mut a = Vec::new();
        let mut rhs = Vec::new();
        for k in 0..n {
            let w = b.upper[k] - b.lower[k];
            let mut up = vec![0.0; n + 1];
            up[k] = 1.0;
            up[n] = 1.0;
            a.push(up);
            rhs.push(w);
            let mut down = vec![0.0; n + 1];
            down[k] = -1.0;
            down[n] = 1.0;
            a.push(down);
            rhs.push(0.0);
        }
        for h in cons {
            let norm = h.a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut row = h.a.clone();
            row.push(norm);
            a.push(row);
            rhs.push(h.c - dot(&h.a, &b.lower));
        }
        let mut cap = vec![0.0; n + 1];
        cap[n] = 1.0;
        a.push(cap);
        rhs.push(1.0);
        let mut c = vec![0.0; n + 1];
        c[n] = -1.0;
        match minimize(&c, &a, &rhs) {
            LpOutcome::Optimal { value, .. } => -value > FEAS_TOL,
            _ => false,
        }
    }

    fn descend(&mut self, layer: usize, post: &Affine, cons: &mut Vec<Halfspace>) -> Result<(), OracleError> {
        let net = &self.task.network;
        let l = net.layer(layer);
        let z = post.compose(&l.weights, &l.bias);
        if layer == net.depth() {
            return self.leaf(&z, cons);
        }
        if !net.is_relu(layer) {
            return self.descend(layer + 1, &z, cons);
        }
        let bounds = self.ibp[layer - 1].clone();
        let undecided: Vec<usize> = (0..z.h.len())
            .filter(|&j| bounds[j].0 < 0.0 && bounds[j].1 > 0.0)
            .collect();
        for mask in 0u64..(1u64 << undecided.len()) {
            let base = cons.len();
            let mut next = z.clone();
            for (j, &(lo, _)) in bounds.iter().enumerate() {
                if lo >= 0.0 {
                    continue;
                }
                let pos = undecided.iter().position(|&u| u == j);
                let active = pos.is_some_and(|p| mask >> p & 1 == 1);
                if pos.is_some() {
                    // Active: z >= 0, i.e. -z <= 0. Inactive: z <= 0.
                    let s = if active { -1.0 } else { 1.0 };
                    cons.push(Halfspace {
                        a: z.g[j].iter().map(|v| s * v).collect(),
                        c: -s * z.h[j],
                    });
                }
                if !active {
                    next.g[j].iter_mut().for_each(|v| *v = 0.0);
                    next.h[j] = 0.0;
                }
            }
            if undecided.is_empty() || self.feasible(cons) {
                self.descend(layer + 1, &next, cons)?;
            }
            cons.truncate(base);
        }
        Ok(())
    }

    fn leaf(&mut self, logits: &Affine, cons: &[Halfspace]) -> Result<(), OracleError> {
        if self.options.drop_thin && !self.has_interior(cons) {
            return Ok(());
        }
        let b = &self.task.input_box;
        let (a, rhs) = self.lp_rows(cons);
        let mut counted = false;
        for (r, row) in self.task.spec.iter().enumerate() {
            let margin = Affine {
                g: logits.g.clone(),
                h: logits.h.clone(),
            }
            .compose(std::slice::from_ref(row), &[0.0]);
            let c = &margin.g[0];
            let offset = margin.h[0] + dot(c, &b.lower);
            match minimize(c, &a, &rhs) {
                LpOutcome::Optimal { value, y } => {
                    if !counted {
                        self.regions += 1;
                        counted = true;
                    }
                    let v = value + offset;
                    if self.best.as_ref().is_none_or(|(best, _, _)| v < *best) {
                        let x: Vec<f64> = y
                            .iter()
                            .zip(b.lower.iter().zip(&b.upper))
                            .map(|(yk, (lo, hi))| (lo + yk).min(*hi))
                            .collect();
                        self.best = Some((v, x, r));
                    }
                }
                LpOutcome::Infeasible => return Ok(()),
                LpOutcome::Unbounded => return Err(OracleError::Unbounded),
            }
        }
        Ok(())
    }
}

/// Global minimum of the margin over the box, by activation-pattern
/// enumeration with the default budget.
pub fn exact_min_margin(task: &VerificationTask) -> Result<ExactMin, OracleError> {
    exact_min_margin_with(task, &OracleOptions::default())
}

pub fn exact_min_margin_with(task: &VerificationTask, options: &OracleOptions) -> Result<ExactMin, OracleError> {
    let n0 = task.input_box.dim();
    if n0 > options.max_inputs {
        return Err(OracleError::TooManyInputs {
            count: n0,
            max: options.max_inputs,
        });
    }
    let unstable = unstable_count(task);
    if unstable > options.max_unstable {
        return Err(OracleError::TooManyUnstable {
            count: unstable,
            max: options.max_unstable,
        });
    }
    let mut e = Enumerator {
        task,
        ibp: interval_bounds(&task.network, &task.input_box),
        options: *options,
        best: None,
        regions: 0,
    };
    let mut cons = Vec::new();
    e.descend(1, &Affine::identity(n0), &mut cons)?;
    let (min_value, argmin, row) = e
        .best
        .expect("the patterns cover the box, so some region is non-empty");
    Ok(ExactMin {
        min_value,
        argmin,
        row,
        unstable,
        regions: e.regions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPoint {
    pub x: Vec<f64>,
    /// Smallest margin row at `x`.
    pub margin: f64,
}

/// Corners are enumerated up to this input dimension.
pub const CORNER_DIM_LIMIT: usize = 16;

/// Worst margin over `samples` uniform points plus every box corner (when
/// the dimension allows).
pub fn sample_min_margin(task: &VerificationTask, samples: usize, seed: u64) -> SampledPoint {
    let b = &task.input_box;
    let n = b.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = SampledPoint {
        x: b.center(),
        margin: f64::INFINITY,
    };
    let consider = |x: Vec<f64>, best: &mut SampledPoint| {
        let m = task
            .network
            .margin_unchecked(&task.spec, &x)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if m < best.margin {
            *best = SampledPoint { x, margin: m };
        }
    };
    for _ in 0..samples {
        let x = (0..n)
            .map(|k| b.lower[k] + rng.random::<f64>() * (b.upper[k] - b.lower[k]))
            .collect();
        consider(x, &mut best);
    }
    if n <= CORNER_DIM_LIMIT {
        for mask in 0u32..(1u32 << n) {
            let x = (0..n)
                .map(|k| if mask >> k & 1 == 1 { b.upper[k] } else { b.lower[k] })
                .collect();
            consider(x, &mut best);
        }
    }
    best
}

/// A point with a non-positive margin, if sampling finds one.
pub fn grid_attack(task: &VerificationTask, samples: usize, seed: u64) -> Option<SampledPoint> {
    let worst = sample_min_margin(task, samples, seed);
    (worst.margin <= 0.0).then_some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};

    fn shifted_relu(offset: f64) -> VerificationTask {
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

    #[test]
    fn toy_minimum() {
        let r = exact_min_margin(&shifted_relu(-0.5)).unwrap();
        assert!((r.min_value + 0.5).abs() < 1e-12);
        assert!(r.argmin[0] <= 0.0);
        assert_eq!(r.unstable, 1);
        assert_eq!(r.regions, 2);
    }

    #[test]
    fn linear_network_is_corner_minimum() {
        let net = Network::new(
            2,
            vec![Layer {
                weights: vec![vec![2.0, -1.0], vec![0.5, 0.5]],
                bias: vec![0.3, 0.0],
                activation: Activation::Linear,
            }],
        )
        .unwrap();
        let task = VerificationTask::new(
            net,
            InputBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]),
            vec![vec![1.0, -1.0]],
        )
        .unwrap();
        // margin = 1.5 x0 - 1.5 x1 + 0.3, min at (-1, 2)
        let r = exact_min_margin(&task).unwrap();
        assert!((r.min_value - (-1.5 - 3.0 + 0.3)).abs() < 1e-12);
        assert_eq!(r.argmin, vec![-1.0, 2.0]);
    }

    #[test]
    fn falsifier_on_toys() {
        assert!(grid_attack(&shifted_relu(-0.5), 100, 1).is_some());
        assert!(grid_attack(&shifted_relu(0.1), 100, 1).is_none());
    }

    #[test]
    fn budget_guard() {
        let mut task = shifted_relu(0.0);
        let opts = OracleOptions {
            max_unstable: 0,
            ..OracleOptions::default()
        };
        assert_eq!(
            exact_min_margin_with(&task, &opts).unwrap_err(),
            OracleError::TooManyUnstable { count: 1, max: 0 }
        );
        task.input_box = InputBox::new(vec![0.0; 7], vec![1.0; 7]);
        let err = exact_min_margin(&task).unwrap_err();
        assert_eq!(err, OracleError::TooManyInputs { count: 7, max: 6 });
    }
}
