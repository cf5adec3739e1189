//! Loop-level IR lowered from an organism, and array contraction over it.

use crate::frontend::{DataId, DimId, KernelGraph, OpId};
use crate::fuseset::{organism_key, Node, Organism};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrNode {
    /// Sequential loop; iterates the current chunk when an enclosing parallel
    /// region cuts the same dimension.
    Loop { dim: DimId, body: Vec<IrNode> },
    /// Data-parallel region over chunks of `dim`. Each result in `partials`
    /// is accumulated per thread and joined afterwards.
    Parallel { dim: DimId, threads: u32, partials: Vec<DataId>, body: Vec<IrNode> },
    /// Zero-initialises the elements of an accumulation target that the
    /// enclosing loops leave unbound.
    Fill { data: DataId },
    /// One element of an operation at the current loop indices.
    Compute { op: OpId },
    /// Sums per-thread partials in ascending thread order.
    Join { data: DataId, threads: u32 },
}

impl IrNode {
    pub fn body(&self) -> &[IrNode] {
        match self {
            IrNode::Loop { body, .. } | IrNode::Parallel { body, .. } => body,
            _ => &[],
        }
    }

    fn walk<'a>(&'a self, path: &mut Vec<usize>, f: &mut impl FnMut(&'a IrNode, &[usize])) {
        f(self, path);
        for (n, c) in self.body().iter().enumerate() {
            path.push(n);
            c.walk(path, f);
            path.pop();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageClass {
    /// Kernel argument.
    Parameter,
    /// Heap array sized by its extents (one element for scalars).
    Array,
    /// Demoted to a local scalar.
    Contracted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopIr {
    pub body: Vec<IrNode>,
    pub classes: Vec<StorageClass>,
    /// For each contracted temporary, the path of the loop whose body
    /// declares it.
    pub homes: Vec<(DataId, Vec<usize>)>,
    pub key: String,
}

impl LoopIr {
    /// Visits every node with its path of body indices.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a IrNode, &[usize])) {
        let mut path = Vec::new();
        for (n, c) in self.body.iter().enumerate() {
            path.push(n);
            c.walk(&mut path, f);
            path.pop();
        }
    }

    pub fn node_at(&self, path: &[usize]) -> &IrNode {
        let mut node = &self.body[path[0]];
        for &n in &path[1..] {
            node = &node.body()[n];
        }
        node
    }

    pub fn loop_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |x, _| n += matches!(x, IrNode::Loop { .. }) as usize);
        n
    }

    pub fn parallel_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |x, _| n += matches!(x, IrNode::Parallel { .. }) as usize);
        n
    }

    pub fn contracted(&self) -> Vec<DataId> {
        self.homes.iter().map(|(d, _)| *d).collect()
    }
}

fn lower_nodes(nodes: &[Node], graph: &KernelGraph) -> Vec<IrNode> {
    let mut out = Vec::new();
    for node in nodes {
        match node {
            Node::Op(op) => out.push(IrNode::Compute { op: *op }),
            Node::Loop { axis, children } => {
                // Accumulations whose reduction loop is this one start from
                // zero just before it.
                for op in node.ops() {
                    if graph.nest(op).reduction() == Some(*axis) {
                        out.push(IrNode::Fill { data: graph.flow.op(op).result });
                    }
                }
                out.push(IrNode::Loop { dim: *axis, body: lower_nodes(children, graph) });
            }
            Node::Partition { axis, threads, children } => {
                let partials: Vec<DataId> = node
                    .ops()
                    .into_iter()
                    .filter(|o| graph.nest(*o).reduction() == Some(*axis))
                    .map(|o| graph.flow.op(o).result)
                    .collect();
                out.push(IrNode::Parallel {
                    dim: *axis,
                    threads: *threads,
                    partials: partials.clone(),
                    body: lower_nodes(children, graph),
                });
                for data in partials {
                    out.push(IrNode::Join { data, threads: *threads });
                }
            }
        }
    }
    out
}

/// Mirrors the organism tree: one loop per loop level, one parallel region
/// per partition. Nothing is contracted yet.
pub fn lower(org: &Organism, graph: &KernelGraph) -> LoopIr {
    let classes = graph
        .flow
        .data
        .iter()
        .map(|d| if graph.is_temporary(d.id) { StorageClass::Array } else { StorageClass::Parameter })
        .collect();
    LoopIr { body: lower_nodes(&org.roots, graph), classes, homes: Vec::new(), key: organism_key(org, graph) }
}

fn references(node: &IrNode, data: DataId, graph: &KernelGraph) -> bool {
    match node {
        IrNode::Compute { op } => graph.flow.touched(*op).contains(&data),
        IrNode::Fill { data: d } | IrNode::Join { data: d, .. } => *d == data,
        _ => false,
    }
}

/// Demotes every temporary whose statements all sit inside loops covering
/// its dimensions to a scalar declared in the innermost such loop.
pub fn contract_arrays(ir: &LoopIr, graph: &KernelGraph) -> LoopIr {
    let mut out = ir.clone();
    for d in &graph.flow.data {
        if !graph.is_temporary(d.id) || ir.classes[d.id.0] != StorageClass::Array {
            continue;
        }
        let dims = graph.data_dims(d.id);
        if dims.is_empty() {
            continue;
        }
        let mut paths: Vec<Vec<usize>> = Vec::new();
        let mut joined = false;
        ir.walk(&mut |n, p| {
            if references(n, d.id, graph) {
                joined |= matches!(n, IrNode::Join { .. });
                paths.push(p.to_vec());
            }
        });
        if joined || paths.is_empty() {
            continue;
        }
        let mut common = paths[0].clone();
        for p in &paths[1..] {
            let n = common.iter().zip(p).take_while(|(a, b)| a == b).count();
            common.truncate(n);
        }
        let mut covered = Vec::new();
        let mut home = None;
        for len in 1..=common.len() {
            if let IrNode::Loop { dim, .. } = ir.node_at(&common[..len]) {
                covered.push(*dim);
                home = Some(common[..len].to_vec());
            }
        }
        if let Some(home) = home {
            if dims.iter().all(|x| covered.contains(x)) {
                out.classes[d.id.0] = StorageClass::Contracted;
                out.homes.push((d.id, home));
            }
        }
    }
    out
}

/// Lowering followed by contraction.
pub fn lower_contracted(org: &Organism, graph: &KernelGraph) -> LoopIr {
    contract_arrays(&lower(org, graph), graph)
}
