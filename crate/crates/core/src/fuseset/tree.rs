//! Fuse-set forests: nested loop and partition levels over operation leaves.

use crate::frontend::{DimId, KernelGraph, OpId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    /// One loop level shared by everything below it.
    Loop { axis: DimId, children: Vec<Node> },
    /// A data-parallel cut along `axis`, run on `threads` threads.
    Partition { axis: DimId, threads: u32, children: Vec<Node> },
    Op(OpId),
}

impl Node {
    pub fn children(&self) -> &[Node] {
        match self {
            Node::Loop { children, .. } | Node::Partition { children, .. } => children,
            Node::Op(_) => &[],
        }
    }

    pub fn children_mut(&mut self) -> Option<&mut Vec<Node>> {
        match self {
            Node::Loop { children, .. } | Node::Partition { children, .. } => Some(children),
            Node::Op(_) => None,
        }
    }

    pub fn axis(&self) -> Option<DimId> {
        match self {
            Node::Loop { axis, .. } | Node::Partition { axis, .. } => Some(*axis),
            Node::Op(_) => None,
        }
    }

    pub fn is_partition(&self) -> bool {
        matches!(self, Node::Partition { .. })
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, Node::Loop { .. })
    }

    /// Leaf ops in depth-first order.
    pub fn ops(&self) -> Vec<OpId> {
        let mut out = Vec::new();
        self.collect_ops(&mut out);
        out
    }

    fn collect_ops(&self, out: &mut Vec<OpId>) {
        match self {
            Node::Op(o) => out.push(*o),
            _ => self.children().iter().for_each(|c| c.collect_ops(out)),
        }
    }

    pub fn min_op(&self) -> OpId {
        self.ops().into_iter().min().expect("node holds at least one op")
    }

    pub fn contains(&self, op: OpId) -> bool {
        match self {
            Node::Op(o) => *o == op,
            _ => self.children().iter().any(|c| c.contains(op)),
        }
    }

    /// Visits this node and every descendant, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    fn walk_mut(&mut self, f: &mut impl FnMut(&mut Node)) {
        f(self);
        if let Some(children) = self.children_mut() {
            for c in children {
                c.walk_mut(f);
            }
        }
    }

    pub fn loop_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |x| n += x.is_loop() as usize);
        n
    }
}

/// One candidate program version.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Organism {
    pub roots: Vec<Node>,
}

impl Organism {
    pub fn new(roots: Vec<Node>) -> Self {
        Organism { roots }
    }

    pub fn ops(&self) -> Vec<OpId> {
        self.roots.iter().flat_map(Node::ops).collect()
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        for r in &self.roots {
            r.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Node)) {
        for r in &mut self.roots {
            r.walk_mut(f);
        }
    }

    /// Partition nodes in tree order.
    pub fn partitions(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if n.is_partition() {
                out.push(n);
            }
        });
        out
    }

    pub fn partition_count(&self) -> usize {
        self.partitions().len()
    }

    pub fn thread_counts(&self) -> Vec<u32> {
        self.partitions()
            .into_iter()
            .map(|n| match n {
                Node::Partition { threads, .. } => *threads,
                _ => unreachable!(),
            })
            .collect()
    }

    pub fn set_threads(&mut self, counts: &[u32]) {
        let mut it = counts.iter();
        self.walk_mut(&mut |n| {
            if let Node::Partition { threads, .. } = n {
                *threads = *it.next().expect("one count per partition");
            }
        });
    }

    pub fn set_all_threads(&mut self, t: u32) {
        self.walk_mut(&mut |n| {
            if let Node::Partition { threads, .. } = n {
                *threads = t;
            }
        });
    }

    pub fn loop_count(&self) -> usize {
        self.roots.iter().map(Node::loop_count).sum()
    }

    /// Child indices from the roots down to the leaf of `op`.
    pub fn path_to(&self, op: OpId) -> Option<Vec<usize>> {
        fn go(nodes: &[Node], op: OpId, path: &mut Vec<usize>) -> bool {
            for (n, node) in nodes.iter().enumerate() {
                if node.contains(op) {
                    path.push(n);
                    return matches!(node, Node::Op(_)) || go(node.children(), op, path);
                }
            }
            false
        }
        let mut path = Vec::new();
        go(&self.roots, op, &mut path).then_some(path)
    }

    /// Nodes along a path of child indices.
    pub fn nodes_on(&self, path: &[usize]) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut level: &[Node] = &self.roots;
        for &n in path {
            let node = &level[n];
            out.push(node);
            level = node.children();
        }
        out
    }

    /// Ancestors of an op's leaf, root first, excluding the leaf.
    pub fn ancestors(&self, op: OpId) -> Vec<&Node> {
        let path = self.path_to(op).unwrap_or_default();
        let mut nodes = self.nodes_on(&path);
        nodes.pop();
        nodes
    }

    /// Loop axes enclosing an op, outermost first.
    pub fn loop_axes(&self, op: OpId) -> Vec<DimId> {
        self.ancestors(op).into_iter().filter(|n| n.is_loop()).filter_map(Node::axis).collect()
    }

    /// Mutable access to the sibling list at `path` (empty path: the roots).
    pub fn siblings_mut(&mut self, path: &[usize]) -> &mut Vec<Node> {
        let mut level = &mut self.roots;
        for &n in path {
            level = level[n].children_mut().expect("path through an inner node");
        }
        level
    }
}

/// The fully unfused, unpartitioned organism: one root per op with the op's
/// loop nest.
pub fn initial_forest(graph: &KernelGraph) -> Organism {
    let roots = graph
        .op_ids()
        .map(|op| {
            graph
                .nest(op)
                .axes
                .iter()
                .rev()
                .fold(Node::Op(op), |inner, a| Node::Loop { axis: a.dim, children: vec![inner] })
        })
        .collect();
    Organism { roots }
}

/// Orders every sibling list topologically by dataflow, breaking ties by the
/// smallest contained op id.
pub fn canonicalize(org: &Organism, graph: &KernelGraph) -> Organism {
    let edges = graph.flow.op_edges();
    let mut out = org.clone();
    sort_level(&mut out.roots, &edges);
    out
}

fn sort_level(nodes: &mut Vec<Node>, edges: &[(OpId, OpId)]) {
    for n in nodes.iter_mut() {
        if let Some(children) = n.children_mut() {
            sort_level(children, edges);
        }
    }
    let sets: Vec<Vec<OpId>> = nodes.iter().map(Node::ops).collect();
    let mins: Vec<OpId> = nodes.iter().map(Node::min_op).collect();
    let count = nodes.len();
    let depends = |a: usize, b: usize| {
        edges.iter().any(|(p, c)| sets[a].contains(p) && sets[b].contains(c))
    };
    let mut placed = vec![false; count];
    let mut order = Vec::with_capacity(count);
    while order.len() < count {
        let ready = (0..count)
            .filter(|&x| !placed[x])
            .filter(|&x| (0..count).all(|y| y == x || placed[y] || !depends(y, x)))
            .min_by_key(|&x| mins[x]);
        // A cyclic sibling relation is illegal anyway; fall back to op order.
        let next = ready.unwrap_or_else(|| (0..count).filter(|&x| !placed[x]).min_by_key(|&x| mins[x]).unwrap());
        placed[next] = true;
        order.push(next);
    }
    let mut taken: Vec<Option<Node>> = nodes.drain(..).map(Some).collect();
    nodes.extend(order.into_iter().map(|x| taken[x].take().unwrap()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn unfused_batax() {
        let g = corpus::load("batax").unwrap();
        let org = initial_forest(&g);
        assert_eq!(org.roots.len(), 3);
        assert_eq!(org.loop_count(), 5);
        assert_eq!(org.ops(), [OpId(1), OpId(2), OpId(3)]);
        assert_eq!(org.loop_axes(OpId(2)), g.nest(OpId(2)).dims());
    }

    #[test]
    fn canonical_order_is_topological() {
        let g = corpus::load("batax").unwrap();
        let mut org = initial_forest(&g);
        org.roots.reverse();
        assert_eq!(canonicalize(&org, &g), initial_forest(&g));
    }
}
