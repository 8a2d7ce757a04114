//! Witness-guided branch and bound.
//!
//! Each sub-domain taken from the worklist goes through four phases:
//!
//! 1. **Abstraction**: linear lower bounds for every specification row.
//! 2. **Safety check**: prune when every row's bound is strictly positive.
//! 3. **Validation**: minimize the failing row's linear bound over the box
//!    and evaluate the concrete network there; a non-positive margin ends
//!    the search with `Unsafe`.
//! 4. **Refinement**: score unstable neurons against the spurious witness,
//!    split the best one and push both children.
//!
//! Splits are enforced by clamping pre-activation bounds only. Layers after
//! the split are re-bounded and intersected with the parent's intervals, and
//! a child's bound is never reported below the bound inherited from its
//! parent (both are sound for the child's region). When no neuron can be
//! split, or every score is zero, the widest input dimension is bisected.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{self, HeuristicKind, ScoreSet, ScoringInput};
use crate::model::{InputBox, Network, VerificationTask};
use crate::relax::{
    compute_bounds, compute_intermediate_bounds, optimize_alpha, refine_intermediate_bounds,
    NeuronBounds, RelaxationParams,
};
use crate::witness::{construct_witness, validate_witness, Witness};

#[derive(Debug, Error, PartialEq)]
pub enum BabError {
    #[error("neuron ({layer}, {neuron}) is already split")]
    AlreadySplit { layer: usize, neuron: usize },
    #[error("neuron ({layer}, {neuron}) is not an unstable ReLU in this sub-domain")]
    NotSplittable { layer: usize, neuron: usize },
    #[error("input box has zero width in every dimension")]
    ZeroWidth,
}

/// Phase of a split neuron: `Active` is `z >= 0`, `Inactive` is `z < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Active,
    Inactive,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Active => 1,
            Sign::Inactive => -1,
        }
    }

    /// Whether a concrete pre-activation lies in this phase. Zero belongs
    /// to the active side.
    pub fn holds(self, z: f64) -> bool {
        match self {
            Sign::Active => z >= 0.0,
            Sign::Inactive => z < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConstraint {
    pub layer: usize,
    pub neuron: usize,
    pub sign: Sign,
}

/// At most one constraint per neuron, ordered by `(layer, neuron)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitSet {
    map: BTreeMap<(usize, usize), Sign>,
}

impl SplitSet {
    pub fn insert(&mut self, layer: usize, neuron: usize, sign: Sign) -> Result<(), BabError> {
        if self.map.contains_key(&(layer, neuron)) {
            return Err(BabError::AlreadySplit { layer, neuron });
        }
        self.map.insert((layer, neuron), sign);
        Ok(())
    }

    pub fn get(&self, layer: usize, neuron: usize) -> Option<Sign> {
        self.map.get(&(layer, neuron)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = SplitConstraint> + '_ {
        self.map.iter().map(|(&(layer, neuron), &sign)| SplitConstraint { layer, neuron, sign })
    }

    pub fn in_layer(&self, layer: usize) -> impl Iterator<Item = (usize, Sign)> + '_ {
        self.map
            .range((layer, 0)..(layer + 1, 0))
            .map(|(&(_, neuron), &sign)| (neuron, sign))
    }

    /// Whether concrete pre-activations (`preacts[i - 1] = z^(i)`) satisfy
    /// every constraint.
    pub fn satisfied_by(&self, preacts: &[Vec<f64>]) -> bool {
        self.iter().all(|c| c.sign.holds(preacts[c.layer - 1][c.neuron]))
    }
}

/// A node of the search tree.
#[derive(Debug, Clone)]
pub struct SubDomain {
    pub input_box: InputBox,
    pub splits: SplitSet,
    pub neuron_bounds: NeuronBounds,
    /// Neuron splits plus input bisections on the path from the root.
    pub depth: usize,
    /// Smallest per-row bound known when this node was created.
    pub parent_lower_bound: f64,
    /// Per-row bounds known when this node was created.
    pub row_bounds: Vec<f64>,
    alphas: Arc<Vec<RelaxationParams>>,
}

impl SubDomain {
    /// Root node with adaptive slopes for every specification row.
    pub fn root(task: &VerificationTask) -> Self {
        let neuron_bounds = compute_intermediate_bounds(
            &task.network,
            &task.input_box,
            &SplitSet::default(),
            None,
        );
        let alpha = RelaxationParams::adaptive(&neuron_bounds);
        Self {
            input_box: task.input_box.clone(),
            splits: SplitSet::default(),
            neuron_bounds,
            depth: 0,
            parent_lower_bound: f64::NEG_INFINITY,
            row_bounds: vec![f64::NEG_INFINITY; task.spec.len()],
            alphas: Arc::new(vec![alpha; task.spec.len()]),
        }
    }

    pub fn alphas(&self) -> &[RelaxationParams] {
        &self.alphas
    }

    pub fn set_alphas(&mut self, alphas: Vec<RelaxationParams>) {
        self.alphas = Arc::new(alphas);
    }

    pub fn is_infeasible(&self) -> bool {
        !self.neuron_bounds.is_feasible()
    }

    /// `(unstable ReLUs, max box width, dimensions at max width)`; strictly
    /// decreases along every split.
    pub fn progress_measure(&self, net: &Network) -> (usize, f64, usize) {
        let widths = self.input_box.widths();
        let max = widths.iter().copied().fold(0.0, f64::max);
        let at_max = widths.iter().filter(|&&w| w == max).count();
        (self.neuron_bounds.unstable_count(net), max, at_max)
    }

    fn child(&self, input_box: InputBox, splits: SplitSet, neuron_bounds: NeuronBounds) -> Self {
        Self {
            input_box,
            splits,
            neuron_bounds,
            depth: self.depth + 1,
            parent_lower_bound: self.parent_lower_bound,
            row_bounds: self.row_bounds.clone(),
            alphas: Arc::clone(&self.alphas),
        }
    }
}

pub(crate) fn measure_decreases(child: (usize, f64, usize), parent: (usize, f64, usize)) -> bool {
    match child.0.cmp(&parent.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match child.1.total_cmp(&parent.1) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => child.2 < parent.2,
        },
    }
}

/// Splits `d` on neuron `(layer, neuron)` into its active and inactive
/// children. Bounds of the split layer and below are reused (with the new
/// clamp); later layers are recomputed unless `full_recompute` asks for all
/// of them. Infeasible children are returned as such; check
/// [`SubDomain::is_infeasible`].
pub fn split_subdomain(
    net: &Network,
    d: &SubDomain,
    layer: usize,
    neuron: usize,
    full_recompute: bool,
) -> Result<(SubDomain, SubDomain), BabError> {
    if d.splits.get(layer, neuron).is_some() {
        return Err(BabError::AlreadySplit { layer, neuron });
    }
    if layer == 0
        || layer > d.neuron_bounds.depth()
        || !net.is_relu(layer)
        || neuron >= d.neuron_bounds.layer(layer).len()
        || !d.neuron_bounds.get(layer, neuron).is_unstable()
    {
        return Err(BabError::NotSplittable { layer, neuron });
    }
    let from = if full_recompute { 1 } else { layer + 1 };
    let make = |sign: Sign| {
        let mut splits = d.splits.clone();
        splits.insert(layer, neuron, sign).expect("checked above");
        let bounds =
            refine_intermediate_bounds(net, &d.input_box, &splits, None, Some(&d.neuron_bounds), from);
        d.child(d.input_box.clone(), splits, bounds)
    };
    Ok((make(Sign::Active), make(Sign::Inactive)))
}

/// Bisects the widest input dimension (lowest index on ties) at its
/// midpoint. Splits are inherited and every layer is re-bounded.
pub fn input_bisect(net: &Network, d: &SubDomain) -> Result<(SubDomain, SubDomain), BabError> {
    let widths = d.input_box.widths();
    let (dim, width) = widths
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, w)| if w > best.1 { (k, w) } else { best });
    if width.is_nan() || width <= 0.0 {
        return Err(BabError::ZeroWidth);
    }
    let lo = d.input_box.lower[dim];
    let hi = d.input_box.upper[dim];
    let mid = lo + 0.5 * (hi - lo);
    let make = |lower: f64, upper: f64| {
        let mut b = d.input_box.clone();
        b.lower[dim] = lower;
        b.upper[dim] = upper;
        let bounds = refine_intermediate_bounds(net, &b, &d.splits, None, Some(&d.neuron_bounds), 1);
        d.child(b, d.splits.clone(), bounds)
    };
    Ok((make(lo, mid), make(mid, hi)))
}

/// What to do when the heuristic gives every candidate a zero score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Retry with the BaBSR score, then bisect the input.
    Babsr,
    /// Bisect the input straight away.
    Bisect,
    /// Split the lowest-indexed candidate anyway and never bisect.
    None,
}

impl FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "babsr" => Ok(Fallback::Babsr),
            "bisect" => Ok(Fallback::Bisect),
            "none" => Ok(Fallback::None),
            other => Err(format!("unknown fallback '{other}' (valid: babsr, bisect, none)")),
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::Babsr => "babsr",
            Fallback::Bisect => "bisect",
            Fallback::None => "none",
        })
    }
}

/// Search configuration (the budget lives on the task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BabConfig {
    /// Sub-domains popped and bounded together.
    pub batch: usize,
    /// Alpha ascent iterations at the root (and per node when enabled).
    pub alpha_iters: usize,
    /// Largest per-coordinate alpha move of one ascent step.
    pub alpha_step: f64,
    pub realpha_per_node: bool,
    pub fallback: Fallback,
    /// Recompute every layer's bounds after a neuron split, not only the
    /// layers after it.
    pub full_recompute: bool,
    /// Record a per-node trace.
    pub trace: bool,
    pub seed: u64,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            batch: 1,
            alpha_iters: 20,
            alpha_step: 0.25,
            realpha_per_node: false,
            fallback: Fallback::Babsr,
            full_recompute: false,
            trace: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Safe,
    Unsafe,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Safe => "Safe",
            Verdict::Unsafe => "Unsafe",
            Verdict::Unknown => "Unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    Verified,
    Infeasible,
    Counterexample,
    NeuronSplit,
    InputBisect,
    /// Nothing left to split; the node stays unresolved.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub node: u64,
    pub parent: Option<u64>,
    pub depth: usize,
    /// Bound used for pruning: the larger of the computed and inherited.
    pub lower_bound: f64,
    /// Bound computed at this node alone.
    pub raw_lower_bound: f64,
    pub outcome: NodeOutcome,
    /// `[layer, neuron, sign]` of the children's new constraint, or the
    /// bisected input dimension.
    pub split: Option<(usize, usize)>,
    pub bisect_dim: Option<usize>,
    pub max_score: f64,
    pub nonzero_scores: usize,
    pub candidates: usize,
    pub children: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub verdict: Verdict,
    /// Sub-domains processed, not counting the root.
    pub branches_visited: u64,
    /// Neuron splits and input bisections performed.
    pub splits_made: u64,
    pub input_bisections: u64,
    pub wall_time_s: f64,
    pub witness: Option<Witness>,
    pub root_lower_bound: f64,
    /// Gap evaluations that were negative before clamping.
    pub gap_clamp_events: u64,
    /// Nodes where the heuristic returned only zeros.
    pub fallback_events: u64,
    pub infeasible_pruned: u64,
    pub unresolved_leaves: u64,
    pub per_node_trace: Option<Vec<NodeTrace>>,
}

/// Priority-queue entry: lowest inherited bound first, then creation order.
#[derive(Debug)]
pub struct WorkItem {
    pub id: u64,
    pub parent: Option<u64>,
    pub domain: SubDomain,
}

impl WorkItem {
    fn key(&self) -> f64 {
        self.domain.parent_lower_bound
    }
}

impl PartialEq for WorkItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for WorkItem {}

impl PartialOrd for WorkItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for WorkItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the maximum; reverse so the smallest key wins.
        other
            .key()
            .total_cmp(&self.key())
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug, Default)]
pub struct Worklist {
    heap: BinaryHeap<WorkItem>,
    next_id: u64,
}

impl Worklist {
    pub fn push(&mut self, parent: Option<u64>, domain: SubDomain) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.heap.push(WorkItem { id, parent, domain });
        id
    }

    pub fn pop(&mut self) -> Option<WorkItem> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

struct Processed {
    outcome: NodeOutcome,
    effective: Vec<f64>,
    raw_lower_bound: f64,
    witness: Option<Witness>,
    children: Vec<SubDomain>,
    split: Option<(usize, usize)>,
    bisect_dim: Option<usize>,
    scores: ScoreSet,
    fell_back: bool,
}

/// Runs the search one batch at a time.
pub struct Search<'a> {
    task: &'a VerificationTask,
    heuristic: HeuristicKind,
    config: &'a BabConfig,
    pub worklist: Worklist,
    pub stats: RunStats,
    trace: Vec<NodeTrace>,
}

impl<'a> Search<'a> {
    pub fn new(task: &'a VerificationTask, heuristic: HeuristicKind, config: &'a BabConfig, root: SubDomain) -> Self {
        let mut worklist = Worklist::default();
        worklist.push(None, root);
        Self {
            task,
            heuristic,
            config,
            worklist,
            stats: RunStats {
                verdict: Verdict::Unknown,
                branches_visited: 0,
                splits_made: 0,
                input_bisections: 0,
                wall_time_s: 0.0,
                witness: None,
                root_lower_bound: f64::NEG_INFINITY,
                gap_clamp_events: 0,
                fallback_events: 0,
                infeasible_pruned: 0,
                unresolved_leaves: 0,
                per_node_trace: None,
            },
            trace: Vec::new(),
        }
    }

    /// Pops up to `batch` sub-domains (never more than `budget` non-root
    /// ones), processes them and merges the results in pop order. Returns a
    /// verdict once the search is decided.
    pub fn step(&mut self, batch: usize, budget: u64) -> Option<Verdict> {
        if self.worklist.is_empty() {
            return Some(if self.stats.unresolved_leaves > 0 {
                Verdict::Unknown
            } else {
                Verdict::Safe
            });
        }
        let mut items = Vec::with_capacity(batch);
        let mut non_root = 0u64;
        while items.len() < batch.max(1) {
            let Some(item) = self.worklist.pop() else { break };
            if item.parent.is_some() {
                if non_root >= budget {
                    self.worklist.heap.push(item);
                    break;
                }
                non_root += 1;
            }
            items.push(item);
        }
        if items.is_empty() {
            return None;
        }
        let results: Vec<Processed> = if items.len() > 1 {
            items.par_iter().map(|it| self.process(&it.domain)).collect()
        } else {
            items.iter().map(|it| self.process(&it.domain)).collect()
        };
        for (item, res) in items.into_iter().zip(results) {
            if item.parent.is_some() {
                self.stats.branches_visited += 1;
            } else {
                self.stats.root_lower_bound = res.raw_lower_bound;
            }
            self.stats.gap_clamp_events += res.scores.clamp_events as u64;
            self.stats.fallback_events += u64::from(res.fell_back);
            let mut child_ids = Vec::new();
            match res.outcome {
                NodeOutcome::NeuronSplit | NodeOutcome::InputBisect => {
                    self.stats.splits_made += 1;
                    if res.outcome == NodeOutcome::InputBisect {
                        self.stats.input_bisections += 1;
                    }
                    for child in res.children {
                        debug_assert!(measure_decreases(
                            child.progress_measure(&self.task.network),
                            item.domain.progress_measure(&self.task.network)
                        ));
                        if child.is_infeasible() {
                            self.stats.infeasible_pruned += 1;
                        } else {
                            child_ids.push(self.worklist.push(Some(item.id), child));
                        }
                    }
                }
                NodeOutcome::Exhausted => self.stats.unresolved_leaves += 1,
                NodeOutcome::Infeasible => self.stats.infeasible_pruned += 1,
                NodeOutcome::Verified | NodeOutcome::Counterexample => {}
            }
            if self.config.trace {
                let nonzero = res
                    .scores
                    .scores
                    .iter()
                    .filter(|s| s.score > heuristics::ZERO_SCORE)
                    .count();
                self.trace.push(NodeTrace {
                    node: item.id,
                    parent: item.parent,
                    depth: item.domain.depth,
                    lower_bound: res.effective.iter().copied().fold(f64::INFINITY, f64::min),
                    raw_lower_bound: res.raw_lower_bound,
                    outcome: res.outcome,
                    split: res.split,
                    bisect_dim: res.bisect_dim,
                    max_score: res.scores.max_score(),
                    nonzero_scores: nonzero,
                    candidates: res.scores.scores.len(),
                    children: child_ids,
                });
            }
            if res.outcome == NodeOutcome::Counterexample {
                self.stats.witness = res.witness;
                return Some(Verdict::Unsafe);
            }
        }
        None
    }

    fn process(&self, d: &SubDomain) -> Processed {
        let net = &self.task.network;
        let spec = &self.task.spec;
        let mut processed = Processed {
            outcome: NodeOutcome::Infeasible,
            effective: d.row_bounds.clone(),
            raw_lower_bound: f64::NEG_INFINITY,
            witness: None,
            children: Vec::new(),
            split: None,
            bisect_dim: None,
            scores: ScoreSet::default(),
            fell_back: false,
        };
        if d.is_infeasible() {
            return processed;
        }

        // Phase 1: abstraction.
        let alphas: Vec<RelaxationParams> = if self.config.realpha_per_node && d.depth > 0 {
            d.alphas
                .iter()
                .zip(spec)
                .map(|(a, row)| {
                    optimize_alpha(
                        net,
                        row,
                        &d.input_box,
                        &d.neuron_bounds,
                        a,
                        self.config.alpha_iters,
                        self.config.alpha_step,
                    )
                })
                .collect()
        } else {
            d.alphas.to_vec()
        };
        let mut bounds = Vec::with_capacity(spec.len());
        for (row, alpha) in spec.iter().zip(&alphas) {
            match compute_bounds(net, row, &d.input_box, &d.neuron_bounds, alpha) {
                Some(b) => bounds.push(b),
                None => return processed,
            }
        }
        processed.raw_lower_bound = bounds
            .iter()
            .map(|b| b.lower_bound)
            .fold(f64::INFINITY, f64::min);
        processed.effective = bounds
            .iter()
            .zip(&d.row_bounds)
            .map(|(b, &inherited)| b.lower_bound.max(inherited))
            .collect();

        // Phase 2: safety check.
        if processed.effective.iter().all(|&lb| lb > 0.0) {
            processed.outcome = NodeOutcome::Verified;
            return processed;
        }

        // Phase 3: witness validation on the most violated row.
        let row = processed
            .effective
            .iter()
            .enumerate()
            .fold(0, |best, (r, &lb)| if lb < processed.effective[best] { r } else { best });
        let bound = &bounds[row];
        let x_star = construct_witness(&bound.w, &d.input_box);
        let abstract_margin = crate::relax::linear_value(&bound.w, bound.b, &x_star);
        let witness = validate_witness(net, spec, x_star, abstract_margin);
        if witness.is_violation() {
            processed.outcome = NodeOutcome::Counterexample;
            processed.witness = Some(witness);
            return processed;
        }

        // Phase 4: refinement.
        let input = ScoringInput {
            net,
            c_row: &spec[row],
            input_box: &d.input_box,
            bound,
            witness: &witness.x_star,
            params: &alphas[row],
        };
        let mut scores = heuristics::score(self.heuristic, &input);
        let mut bisect = scores.scores.is_empty();
        if !bisect && scores.all_zero() {
            processed.fell_back = true;
            match self.config.fallback {
                Fallback::Babsr => {
                    let clamps = scores.clamp_events;
                    scores = heuristics::babsr_score(net, bound);
                    scores.clamp_events += clamps;
                    bisect = scores.all_zero();
                }
                Fallback::Bisect => bisect = true,
                Fallback::None => {}
            }
        }
        let parent_bound = processed.effective.iter().copied().fold(f64::INFINITY, f64::min);
        let mut node = d.clone();
        node.parent_lower_bound = parent_bound;
        node.row_bounds = processed.effective.clone();
        if self.config.realpha_per_node {
            node.set_alphas(alphas);
        }
        processed.scores = scores;

        if !bisect {
            let (layer, neuron) = heuristics::select_branch(&processed.scores.scores)
                .expect("non-empty candidate list");
            let (pos, neg) = split_subdomain(net, &node, layer, neuron, self.config.full_recompute)
                .expect("candidate is an unsplit unstable neuron");
            processed.outcome = NodeOutcome::NeuronSplit;
            processed.split = Some((layer, neuron));
            processed.children = vec![pos, neg];
        } else if self.config.fallback == Fallback::None {
            processed.outcome = NodeOutcome::Exhausted;
        } else {
            match input_bisect(net, &node) {
                Ok((a, b)) => {
                    processed.outcome = NodeOutcome::InputBisect;
                    processed.bisect_dim = widest_dim(&node.input_box);
                    processed.children = vec![a, b];
                }
                Err(_) => processed.outcome = NodeOutcome::Exhausted,
            }
        }
        processed
    }

    pub fn finish(mut self, verdict: Verdict, started: Instant) -> RunStats {
        self.stats.verdict = verdict;
        self.stats.wall_time_s = started.elapsed().as_secs_f64();
        if self.config.trace {
            self.stats.per_node_trace = Some(self.trace);
        }
        self.stats
    }
}

fn widest_dim(b: &InputBox) -> Option<usize> {
    let widths = b.widths();
    let max = widths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    widths.iter().position(|&w| w == max)
}

/// Decides the task: `Safe` when every sub-domain is pruned, `Unsafe` with a
/// concrete witness, `Unknown` when the budget runs out or some leaf cannot
/// be refined further.
pub fn verify(task: &VerificationTask, heuristic: HeuristicKind, config: &BabConfig) -> RunStats {
    let started = Instant::now();
    let mut root = SubDomain::root(task);
    if !root.is_infeasible() {
        let alphas = task
            .spec
            .iter()
            .zip(root.alphas())
            .map(|(row, init)| {
                optimize_alpha(
                    &task.network,
                    row,
                    &root.input_box,
                    &root.neuron_bounds,
                    init,
                    config.alpha_iters,
                    config.alpha_step,
                )
            })
            .collect();
        root.set_alphas(alphas);
    }
    let mut search = Search::new(task, heuristic, config, root);
    let batch = config.batch.max(1);
    // The root is always processed; budgets apply from its children on.
    let mut root_done = false;
    loop {
        if root_done && !search.worklist.is_empty() {
            let out_of_time = started.elapsed().as_secs_f64() >= task.timeout_seconds;
            let out_of_branches = search.stats.branches_visited >= task.max_branches;
            if out_of_time || out_of_branches {
                return search.finish(Verdict::Unknown, started);
            }
        }
        root_done = true;
        let budget = task.max_branches.saturating_sub(search.stats.branches_visited);
        if let Some(v) = search.step(batch, budget) {
            return search.finish(v, started);
        }
    }
}
