//! Single-level data partitionings of operations and their joint resolution
//! inside a fused region.

use crate::frontend::{DataId, DimId, KernelGraph, OpId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionChoice {
    pub op: OpId,
    pub axis: DimId,
    /// Operands and result cut into per-thread slices.
    pub sliced: Vec<DataId>,
    /// Operands every thread reads whole.
    pub replicated: Vec<DataId>,
    /// The cut runs through the reduction axis: each thread accumulates a
    /// partial result that needs a join before it can be read.
    pub parallel_reduction: bool,
}

/// One choice per axis of the op's nest, outermost first. Ops without loops
/// have none.
pub fn enumerate_partitionings(op: OpId, graph: &KernelGraph) -> Vec<PartitionChoice> {
    let node = graph.flow.op(op);
    let nest = graph.nest(op);
    nest.axes
        .iter()
        .map(|a| {
            let has = |d: DataId| graph.data_dims(d).contains(&a.dim);
            let mut sliced = Vec::new();
            let mut replicated = Vec::new();
            for d in graph.flow.touched(op) {
                if has(d) {
                    sliced.push(d);
                } else if d != node.result {
                    replicated.push(d);
                }
            }
            PartitionChoice { op, axis: a.dim, sliced, replicated, parallel_reduction: a.reduction }
        })
        .collect()
}

fn consistent(assignment: &[PartitionChoice], edges: &[(OpId, OpId)]) -> bool {
    // One parallel loop drives the region, so every op cuts the same axis.
    let axis = assignment[0].axis;
    if assignment.iter().any(|c| c.axis != axis) {
        return false;
    }
    // Shared data must be sliced the same way by every op touching it.
    for a in assignment {
        for b in assignment {
            for d in a.sliced.iter().chain(&a.replicated) {
                let in_b = b.sliced.contains(d) || b.replicated.contains(d);
                if in_b && a.sliced.contains(d) != b.sliced.contains(d) {
                    return false;
                }
            }
        }
    }
    // A partial result cannot be read before the join after the region.
    let ops: Vec<OpId> = assignment.iter().map(|c| c.op).collect();
    !assignment
        .iter()
        .any(|c| c.parallel_reduction && edges.iter().any(|&(p, q)| p == c.op && ops.contains(&q)))
}

/// Every consistent assignment of partition choices to the given ops, found
/// by brute force over the product of per-op choices.
pub fn joint_partitions(ops: &[OpId], graph: &KernelGraph) -> Vec<Vec<PartitionChoice>> {
    let per_op: Vec<Vec<PartitionChoice>> = ops.iter().map(|&o| enumerate_partitionings(o, graph)).collect();
    if per_op.is_empty() || per_op.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let edges = graph.flow.op_edges();
    let mut out = Vec::new();
    let mut index = vec![0usize; per_op.len()];
    loop {
        let assignment: Vec<PartitionChoice> =
            index.iter().zip(&per_op).map(|(&n, choices)| choices[n].clone()).collect();
        if consistent(&assignment, &edges) {
            out.push(assignment);
        }
        let mut slot = 0;
        loop {
            if slot == index.len() {
                return out;
            }
            index[slot] += 1;
            if index[slot] < per_op[slot].len() {
                break;
            }
            index[slot] = 0;
            slot += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn batax_op_choices() {
        let g = corpus::load("batax").unwrap();
        let name = |d: &DataId| g.flow.data_node(*d).name.clone();
        let c1 = enumerate_partitionings(OpId(1), &g);
        assert_eq!(c1.len(), 2);
        assert_eq!(g.label(c1[0].axis), "i");
        assert!(!c1[0].parallel_reduction);
        assert_eq!(c1[0].replicated.iter().map(name).collect::<Vec<_>>(), ["x"]);
        assert_eq!(g.label(c1[1].axis), "j");
        assert!(c1[1].parallel_reduction);
        let c2 = enumerate_partitionings(OpId(2), &g);
        assert_eq!(g.label(c2[0].axis), "i");
        assert!(c2[0].parallel_reduction);
        assert_eq!(c2[0].sliced.iter().map(name).collect::<Vec<_>>(), ["A", "t0"]);
    }

    #[test]
    fn copy_has_no_choices() {
        let g = crate::frontend::compile_kernel("T in: a : scalar out: b : scalar { b = a }").unwrap();
        assert!(enumerate_partitionings(OpId(1), &g).is_empty());
        assert!(joint_partitions(&[OpId(1)], &g).is_empty());
    }

    #[test]
    fn single_op_gets_all_choices() {
        let g = corpus::load("batax").unwrap();
        assert_eq!(joint_partitions(&[OpId(2)], &g), vec![
            vec![enumerate_partitionings(OpId(2), &g)[0].clone()],
            vec![enumerate_partitionings(OpId(2), &g)[1].clone()],
        ]);
    }
}
