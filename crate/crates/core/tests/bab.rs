mod common;

use common::*;
use drgbab::bab::{input_bisect, split_subdomain, NodeOutcome, Sign, SubDomain};
use drgbab::{verify, BabConfig, HeuristicKind, Verdict};

#[test]
fn toy_verdicts() {
    let safe = verify(&shifted_relu(0.1), HeuristicKind::Drg, &BabConfig::default());
    assert_eq!((safe.verdict, safe.branches_visited), (Verdict::Safe, 0));
    let unsafe_ = verify(&shifted_relu(-0.5), HeuristicKind::Drg, &BabConfig::default());
    assert_eq!(unsafe_.verdict, Verdict::Unsafe);
    let w = unsafe_.witness.unwrap();
    assert_eq!(w.concrete_margin, vec![-0.5]);
    assert!(w.x_star[0] <= 0.0);
}

#[test]
fn split_children_partition_the_parent() {
    let mut r = rng(51);
    let mut splits_checked = 0;
    for _ in 0..20 {
        let task = random_task(&mut r, 2, &[6, 6], 2, 0.6);
        let net = &task.network;
        let root = SubDomain::root(&task);
        let unstable = root.neuron_bounds.unstable_neurons(net);
        let Some(&(layer, neuron)) = unstable.last() else { continue };
        let (pos, neg) = split_subdomain(net, &root, layer, neuron, false).unwrap();
        assert_eq!(pos.splits.get(layer, neuron), Some(Sign::Active));
        assert_eq!(neg.splits.get(layer, neuron), Some(Sign::Inactive));
        for _ in 0..1000 {
            let x = sample_in(&mut r, &task.input_box);
            let (_, pre) = net.forward(&x).unwrap();
            let in_pos = pos.splits.satisfied_by(&pre);
            let in_neg = neg.splits.satisfied_by(&pre);
            assert!(in_pos != in_neg);
            // The child that owns x must have bounds containing its pre-activations.
            let owner = if in_pos { &pos } else { &neg };
            for i in 0..net.hidden_depth() {
                for (j, &z) in pre[i].iter().enumerate() {
                    let iv = owner.neuron_bounds.get(i + 1, j);
                    assert!(iv.lower - 1e-9 <= z && z <= iv.upper + 1e-9);
                }
            }
        }
        splits_checked += 1;
    }
    assert!(splits_checked >= 10);
}

#[test]
fn split_rejects_stable_or_repeated_neurons() {
    let task = shifted_relu(0.0);
    let root = SubDomain::root(&task);
    let (pos, _) = split_subdomain(&task.network, &root, 1, 0, false).unwrap();
    assert!(split_subdomain(&task.network, &pos, 1, 0, false).is_err());
    assert!(split_subdomain(&task.network, &root, 2, 0, false).is_err());
}

#[test]
fn bisection_shrinks_geometrically() {
    let mut r = rng(52);
    let task = random_task(&mut r, 3, &[4], 2, 0.8);
    let n0 = task.input_box.dim();
    let initial = task.input_box.max_width();
    let mut d = SubDomain::root(&task);
    for k in 1..=12 {
        let (a, _) = input_bisect(&task.network, &d).unwrap();
        d = a;
        assert_eq!(d.depth, k);
        let bound = initial * 0.5f64.powi((k / n0) as i32);
        assert!(d.input_box.max_width() <= bound * (1.0 + 1e-12));
    }
}

#[test]
fn measure_decreases_on_every_split() {
    let mut r = rng(53);
    for _ in 0..20 {
        let task = random_task(&mut r, 2, &[6, 6], 2, 0.6);
        let net = &task.network;
        let root = SubDomain::root(&task);
        let parent = root.progress_measure(net);
        let less = |c: (usize, f64, usize)| {
            c.0 < parent.0 || (c.0 == parent.0 && (c.1 < parent.1 || (c.1 == parent.1 && c.2 < parent.2)))
        };
        for (layer, neuron) in root.neuron_bounds.unstable_neurons(net) {
            let (a, b) = split_subdomain(net, &root, layer, neuron, false).unwrap();
            assert!(less(a.progress_measure(net)) && less(b.progress_measure(net)));
        }
        let (a, b) = input_bisect(net, &root).unwrap();
        assert!(less(a.progress_measure(net)) && less(b.progress_measure(net)));
    }
}

#[test]
fn batch_size_does_not_change_verdicts_and_runs_are_deterministic() {
    let tasks = oracle_instances(5, 12);
    for task in &tasks {
        let one = verify(task, HeuristicKind::Drg, &BabConfig::default());
        let again = verify(task, HeuristicKind::Drg, &BabConfig::default());
        let eight = verify(
            task,
            HeuristicKind::Drg,
            &BabConfig {
                batch: 8,
                ..BabConfig::default()
            },
        );
        assert_eq!(one.verdict, eight.verdict);
        assert_eq!(
            (one.verdict, one.branches_visited, one.splits_made, &one.witness),
            (again.verdict, again.branches_visited, again.splits_made, &again.witness)
        );
    }
}

#[test]
fn trace_is_consistent() {
    let tasks = oracle_instances(6, 10);
    let config = BabConfig {
        trace: true,
        ..BabConfig::default()
    };
    for task in &tasks {
        let stats = verify(task, HeuristicKind::Drg, &config);
        let trace = stats.per_node_trace.as_ref().unwrap();
        assert_eq!(trace.len() as u64, stats.branches_visited + 1);
        let splits = trace
            .iter()
            .filter(|n| matches!(n.outcome, NodeOutcome::NeuronSplit | NodeOutcome::InputBisect))
            .count() as u64;
        assert_eq!(splits, stats.splits_made);
        for node in trace {
            if let Some(p) = node.parent {
                let parent = trace.iter().find(|n| n.node == p).unwrap();
                assert!(parent.children.contains(&node.node));
                assert_eq!(node.depth, parent.depth + 1);
                assert!(node.lower_bound >= parent.lower_bound - 1e-9);
            }
        }
        if stats.verdict == Verdict::Unsafe {
            let w = stats.witness.as_ref().unwrap();
            assert!(min_margin(task, &w.x_star) <= 0.0);
        }
    }
}

#[test]
fn branch_budget_yields_unknown() {
    let tasks = oracle_instances(7, 30);
    let hard = tasks
        .iter()
        .find(|t| verify(t, HeuristicKind::Width, &BabConfig::default()).branches_visited > 5)
        .expect("a suite instance that needs branching");
    let capped = hard.clone().with_budget(300.0, 3);
    let stats = verify(&capped, HeuristicKind::Width, &BabConfig::default());
    assert!(stats.verdict == Verdict::Unknown || stats.verdict == Verdict::Unsafe);
    assert!(stats.branches_visited <= 3);
}
