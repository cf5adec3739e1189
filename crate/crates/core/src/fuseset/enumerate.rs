//! Exhaustive enumeration of legal organisms for small kernels, and the size
//! of the naive digit encoding for contrast.

use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use thiserror::Error;

use super::legality::{admitted, is_legal, partition_conflict, share_operand};
use super::notation::{format_notation, organism_key};
use super::tree::{canonicalize, Node, Organism};
use crate::frontend::{DimId, KernelGraph, OpId};

/// Thread counts attached to the partitions of each enumerated structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThreadSpace {
    /// Every partition runs the same fixed count.
    Const(u32),
    /// One shared count drawn from the list.
    Global(Vec<u32>),
    /// Each partition draws its own count from the list.
    PerPartition(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Limits {
    pub max_ops: usize,
    pub partitions: bool,
    pub prune: bool,
    pub threads: ThreadSpace,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_ops: 4, partitions: true, prune: true, threads: ThreadSpace::Const(1) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerateError {
    #[error("kernel has {ops} ops; exhaustive enumeration is limited to {limit}")]
    TooLarge { ops: usize, limit: usize },
}

/// All set partitions of `items`, each as a list of blocks.
fn set_partitions(items: &[OpId]) -> Vec<Vec<Vec<OpId>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![vec![]];
    };
    let mut out = Vec::new();
    for p in set_partitions(rest) {
        for n in 0..p.len() {
            let mut q = p.clone();
            q[n].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

fn common_axes(block: &[OpId], graph: &KernelGraph) -> Vec<DimId> {
    graph.nest(block[0]).dims().into_iter().filter(|d| block.iter().all(|o| graph.nest(*o).contains(*d))).collect()
}

fn product(options: Vec<Vec<Node>>) -> Vec<Vec<Node>> {
    options.into_iter().fold(vec![vec![]], |acc, opts| {
        acc.iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect()
    })
}

/// Generates candidate forests, discarding locally illegal groupings as
/// early as possible. Survivors still go through the full legality check.
struct Generator<'a> {
    graph: &'a KernelGraph,
    limits: &'a Limits,
    reach: Vec<Vec<bool>>,
    edges: Vec<(OpId, OpId)>,
    memo: HashMap<(Vec<OpId>, usize, bool), Vec<Vec<Node>>>,
}

impl Generator<'_> {
    /// No dataflow path leaves the block and comes back.
    fn convex(&self, block: &[OpId]) -> bool {
        self.graph.op_ids().filter(|o| !block.contains(o)).all(|x| {
            !(block.iter().any(|a| self.reach[a.index()][x.index()])
                && block.iter().any(|b| self.reach[x.index()][b.index()]))
        })
    }

    /// Sibling blocks admit a topological order and, when pruning, are
    /// connected through shared operands.
    fn siblings_ok(&self, blocks: &[Vec<OpId>]) -> bool {
        let reaches = |x: &[OpId], y: &[OpId]| x.iter().any(|a| y.iter().any(|b| self.reach[a.index()][b.index()]));
        for (n, x) in blocks.iter().enumerate() {
            if blocks[n + 1..].iter().any(|y| reaches(x, y) && reaches(y, x)) {
                return false;
            }
        }
        if !self.limits.prune || blocks.len() < 2 {
            return true;
        }
        let linked = |x: usize, y: usize| {
            blocks[x].iter().any(|&a| blocks[y].iter().any(|&b| share_operand(a, b, self.graph)))
        };
        let mut reached = vec![false; blocks.len()];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..blocks.len() {
                if !reached[y] && linked(x, y) {
                    reached[y] = true;
                    stack.push(y);
                }
            }
        }
        reached.iter().all(|&r| r)
    }

    /// Forests over `ops` placed below `depth` shared loops.
    fn forests(&mut self, ops: &[OpId], depth: usize, root: bool) -> Vec<Vec<Node>> {
        let memo_key = (ops.to_vec(), depth, root);
        if let Some(v) = self.memo.get(&memo_key) {
            return v.clone();
        }
        let mut out = Vec::new();
        for blocks in set_partitions(ops) {
            if !blocks.iter().all(|b| b.len() == 1 || self.convex(b)) || !self.siblings_ok(&blocks) {
                continue;
            }
            let options: Vec<Vec<Node>> = blocks.iter().map(|b| self.block_options(b, depth, root)).collect();
            if options.iter().any(Vec::is_empty) {
                continue;
            }
            out.extend(product(options));
        }
        self.memo.insert(memo_key, out.clone());
        out
    }

    fn block_options(&mut self, block: &[OpId], depth: usize, root: bool) -> Vec<Node> {
        let graph = self.graph;
        let mut out = Vec::new();
        if block.len() == 1 && graph.nest(block[0]).depth() == depth {
            out.push(Node::Op(block[0]));
        }
        let next: Vec<Option<DimId>> = block.iter().map(|o| graph.nest(*o).axes.get(depth).map(|a| a.dim)).collect();
        if let Some(axis) = next[0] {
            // A loop may not hold a consumer of a reduction it carries.
            let carries = self.edges.iter().any(|(p, c)| {
                block.contains(p) && block.contains(c) && graph.nest(*p).reduction() == Some(axis)
            });
            if next.iter().all(|a| *a == Some(axis)) && !carries {
                for children in self.forests(block, depth + 1, false) {
                    out.push(Node::Loop { axis, children });
                }
            }
        }
        if root && self.limits.partitions && block.iter().all(|o| graph.nest(*o).depth() > 0) {
            for axis in common_axes(block, graph) {
                if partition_conflict(block, axis, graph, &self.edges).is_some() {
                    continue;
                }
                for children in self.forests(block, 0, false) {
                    if children.iter().all(Node::is_loop) {
                        out.push(Node::Partition { axis, threads: 1, children });
                    }
                }
            }
        }
        out
    }
}

/// Legal structures with every partition at one thread, deduplicated and
/// in canonical form.
pub fn enumerate_structures(graph: &KernelGraph, limits: &Limits) -> Result<Vec<Organism>, EnumerateError> {
    let ops: Vec<OpId> = graph.op_ids().collect();
    if ops.len() > limits.max_ops {
        return Err(EnumerateError::TooLarge { ops: ops.len(), limit: limits.max_ops });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut generator =
        Generator { graph, limits, reach: graph.flow.reachability(), edges: graph.flow.op_edges(), memo: HashMap::new() };
    for roots in generator.forests(&ops, 0, true) {
        let org = canonicalize(&Organism::new(roots), graph);
        if !is_legal(&org, graph) || (limits.prune && !admitted(&org, graph)) {
            continue;
        }
        if seen.insert(format_notation(&org, graph)) {
            out.push(org);
        }
    }
    Ok(out)
}

/// Attaches thread counts to a structure per the thread space.
pub fn expand_threads(org: &Organism, threads: &ThreadSpace) -> Vec<Organism> {
    let p = org.partition_count();
    if p == 0 {
        return vec![org.clone()];
    }
    let with = |counts: Vec<u32>| {
        let mut o = org.clone();
        o.set_threads(&counts);
        o
    };
    match threads {
        ThreadSpace::Const(t) => vec![with(vec![*t; p])],
        ThreadSpace::Global(list) => list.iter().map(|&t| with(vec![t; p])).collect(),
        ThreadSpace::PerPartition(list) => {
            let mut combos: Vec<Vec<u32>> = vec![vec![]];
            for _ in 0..p {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        list.iter().map(move |&t| {
                            let mut c = c.clone();
                            c.push(t);
                            c
                        })
                    })
                    .collect();
            }
            combos.into_iter().map(with).collect()
        }
    }
}

/// Every legal organism within the limits, thread counts included.
pub fn enumerate_space(graph: &KernelGraph, limits: &Limits) -> Result<Vec<Organism>, EnumerateError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in enumerate_structures(graph, limits)? {
        for org in expand_threads(&s, &limits.threads) {
            if seen.insert(organism_key(&org, graph)) {
                out.push(org);
            }
        }
    }
    Ok(out)
}

/// Size of the naive per-op digit encoding: one fusion-depth digit per op
/// pair and one partition-axis-and-thread digit per op.
pub fn digit_space_size(ops: u32, max_depth: u32, max_threads: u32) -> BigUint {
    let pairs = ops * ops.saturating_sub(1) / 2;
    BigUint::from(max_depth + 1).pow(pairs) * BigUint::from(3 * (max_threads + 1)).pow(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn digit_space() {
        assert_eq!(digit_space_size(3, 3, 8), BigUint::from(1_259_712u32));
        assert_eq!(digit_space_size(1, 5, 8), BigUint::from(27u32));
        assert_eq!(digit_space_size(2, 2, 0), BigUint::from(27u32));
        assert!(digit_space_size(40, 3, 64).bits() > 64);
    }

    #[test]
    fn set_partition_count_is_bell() {
        let ops: Vec<OpId> = (1..=5).map(OpId).collect();
        assert_eq!(set_partitions(&ops).len(), 52);
    }

    #[test]
    fn single_op_fusion_only() {
        let g = crate::frontend::compile_kernel(
            "D in: z : vector(column), u : vector(column) out: b : scalar { b = z' * u }",
        )
        .unwrap();
        let limits = Limits { partitions: false, ..Limits::default() };
        assert_eq!(enumerate_space(&g, &limits).unwrap().len(), 1);
    }

    #[test]
    fn refuses_large_kernels() {
        let g = corpus::load("gemver").unwrap();
        assert_eq!(
            enumerate_space(&g, &Limits::default()),
            Err(EnumerateError::TooLarge { ops: 9, limit: 4 })
        );
    }
}
