//! Mutation: the legal neighbours of an organism under each kind of change.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{SearchConfig, ThreadMode};
use crate::frontend::{DimId, KernelGraph, OpId};
use crate::fuseset::{admitted, canonicalize, is_legal, Node, Organism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mutation {
    AddFusion,
    RemoveFusion,
    AddPartition,
    RemovePartition,
    ChangeAxis,
    ChangeThreads,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::AddFusion,
        Mutation::RemoveFusion,
        Mutation::AddPartition,
        Mutation::RemovePartition,
        Mutation::ChangeAxis,
        Mutation::ChangeThreads,
    ];
}

/// Paths of every sibling list: the roots, then each inner node's children.
fn sibling_paths(org: &Organism) -> Vec<Vec<usize>> {
    fn go(nodes: &[Node], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(path.clone());
        for (n, node) in nodes.iter().enumerate() {
            if !matches!(node, Node::Op(_)) {
                path.push(n);
                go(node.children(), path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(&org.roots, &mut Vec::new(), &mut out);
    out
}

fn common_axes(ops: &[OpId], graph: &KernelGraph) -> Vec<DimId> {
    graph.nest(ops[0]).dims().into_iter().filter(|d| ops.iter().all(|o| graph.nest(*o).contains(*d))).collect()
}

/// Thread count for a newly created partition.
fn fresh_threads(org: &Organism, cfg: &SearchConfig) -> u32 {
    match cfg.thread_mode {
        ThreadMode::Global => org.thread_counts().first().copied().unwrap_or(cfg.cores),
        _ => cfg.cores,
    }
}

fn step_threads(t: u32, cores: u32) -> Vec<u32> {
    let (lo, hi) = if cores < 2 { (1, 1) } else { (2, cores) };
    let mut out = Vec::new();
    for v in [t.saturating_sub(2).clamp(lo, hi), (t + 2).clamp(lo, hi)] {
        if v != t && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn fusions(org: &Organism, out: &mut Vec<Organism>) {
    for path in sibling_paths(org) {
        let list = org.nodes_on(&path).last().map_or(&org.roots[..], |n| n.children());
        let root = path.is_empty();
        for a in 0..list.len() {
            for b in a + 1..list.len() {
                let merged = match (&list[a], &list[b]) {
                    (Node::Loop { axis: x, children: c }, Node::Loop { axis: y, children: d }) if x == y => {
                        Some(Node::Loop { axis: *x, children: [c.clone(), d.clone()].concat() })
                    }
                    (
                        Node::Partition { axis: x, threads, children: c },
                        Node::Partition { axis: y, children: d, .. },
                    ) if root && x == y => {
                        Some(Node::Partition { axis: *x, threads: *threads, children: [c.clone(), d.clone()].concat() })
                    }
                    (Node::Partition { axis, threads, children }, l @ Node::Loop { .. })
                    | (l @ Node::Loop { .. }, Node::Partition { axis, threads, children }) if root => {
                        let mut children = children.clone();
                        children.push(l.clone());
                        Some(Node::Partition { axis: *axis, threads: *threads, children })
                    }
                    _ => None,
                };
                if let Some(m) = merged {
                    let mut o = org.clone();
                    let level = o.siblings_mut(&path);
                    level[a] = m;
                    level.remove(b);
                    out.push(o);
                }
            }
        }
    }
}

fn fissions(org: &Organism, out: &mut Vec<Organism>) {
    for path in sibling_paths(org) {
        let Some((&n, parent)) = path.split_last() else { continue };
        let node = &org.nodes_on(&path)[path.len() - 1];
        let children = node.children();
        let m = children.len();
        if m < 2 {
            continue;
        }
        // Subsets holding the first child, so each split appears once. Wide
        // nodes only split off single children.
        let masks: Vec<u32> =
            if m <= 12 { (0..1u32 << (m - 1)).map(|x| (x << 1) | 1).filter(|&x| x != (1 << m) - 1).collect() } else {
                (0..m).map(|k| 1u32 << k).collect()
            };
        for mask in masks {
            let pick = |keep: bool| -> Vec<Node> {
                children.iter().enumerate().filter(|(k, _)| (mask >> k & 1 == 1) == keep).map(|(_, c)| c.clone()).collect()
            };
            let (s, r) = (pick(true), pick(false));
            let (x, y) = match node {
                Node::Loop { axis, .. } => {
                    (Node::Loop { axis: *axis, children: s }, Node::Loop { axis: *axis, children: r })
                }
                Node::Partition { axis, threads, .. } => (
                    Node::Partition { axis: *axis, threads: *threads, children: s },
                    Node::Partition { axis: *axis, threads: *threads, children: r },
                ),
                Node::Op(_) => unreachable!(),
            };
            let mut o = org.clone();
            let level = o.siblings_mut(parent);
            level[n] = x;
            level.insert(n + 1, y);
            out.push(o);
        }
    }
}

/// Every distinct legal organism one change of the given kind away.
/// Results are canonical and exclude `org` itself.
pub fn neighbors(org: &Organism, graph: &KernelGraph, kind: Mutation, cfg: &SearchConfig) -> Vec<Organism> {
    let mut raw = Vec::new();
    match kind {
        Mutation::AddFusion => fusions(org, &mut raw),
        Mutation::RemoveFusion => fissions(org, &mut raw),
        Mutation::AddPartition => {
            let t = fresh_threads(org, cfg);
            for (n, r) in org.roots.iter().enumerate() {
                if r.is_loop() {
                    for axis in common_axes(&r.ops(), graph) {
                        let mut o = org.clone();
                        o.roots[n] = Node::Partition { axis, threads: t, children: vec![r.clone()] };
                        raw.push(o);
                    }
                }
            }
        }
        Mutation::RemovePartition => {
            for (n, r) in org.roots.iter().enumerate() {
                if r.is_partition() {
                    let mut o = org.clone();
                    o.roots.splice(n..=n, r.children().iter().cloned());
                    raw.push(o);
                }
            }
        }
        Mutation::ChangeAxis => {
            for (n, r) in org.roots.iter().enumerate() {
                if let Node::Partition { axis, threads, children } = r {
                    for a in common_axes(&r.ops(), graph).into_iter().filter(|a| a != axis) {
                        let mut o = org.clone();
                        o.roots[n] = Node::Partition { axis: a, threads: *threads, children: children.clone() };
                        raw.push(o);
                    }
                }
            }
        }
        Mutation::ChangeThreads => {
            let counts = org.thread_counts();
            match cfg.thread_mode {
                ThreadMode::Const => {}
                ThreadMode::Global => {
                    if let Some(&t) = counts.first() {
                        for v in step_threads(t, cfg.cores) {
                            let mut o = org.clone();
                            o.set_all_threads(v);
                            raw.push(o);
                        }
                    }
                }
                ThreadMode::Exhaustive => {
                    for (k, &t) in counts.iter().enumerate() {
                        for v in step_threads(t, cfg.cores) {
                            let mut c = counts.clone();
                            c[k] = v;
                            let mut o = org.clone();
                            o.set_threads(&c);
                            raw.push(o);
                        }
                    }
                }
            }
        }
    }
    let base = canonicalize(org, graph);
    let mut out: Vec<Organism> = Vec::new();
    for o in raw {
        let o = canonicalize(&o, graph);
        if o != base && !out.contains(&o) && is_legal(&o, graph) && (!cfg.prune || admitted(&o, graph)) {
            out.push(o);
        }
    }
    out
}

/// Samples one of the four kinds of change uniformly, add or remove with
/// equal odds, and applies a uniformly chosen legal instance of it. Returns
/// the organism unchanged when that change has no legal instance.
pub fn mutate(org: &Organism, graph: &KernelGraph, cfg: &SearchConfig, rng: &mut impl Rng) -> Organism {
    let add = rng.gen_bool(0.5);
    let kind = match rng.gen_range(0..4) {
        0 if add => Mutation::AddFusion,
        0 => Mutation::RemoveFusion,
        1 if add => Mutation::AddPartition,
        1 => Mutation::RemovePartition,
        2 => Mutation::ChangeAxis,
        _ => Mutation::ChangeThreads,
    };
    neighbors(org, graph, kind, cfg).choose(rng).cloned().unwrap_or_else(|| org.clone())
}
