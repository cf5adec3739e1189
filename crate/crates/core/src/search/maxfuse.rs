//! The max-fuse seed: greedy grouping into parallel regions followed by
//! greedy loop fusion until no fusion step remains legal.

use super::mutate::{neighbors, Mutation};
use super::{SearchConfig, ThreadMode};
use crate::frontend::{DimId, KernelGraph, OpId};
use crate::fuseset::legality::partition_conflict;
use crate::fuseset::{canonicalize, initial_forest, is_legal, Node, Organism};

/// Conflict-free partition axis for a group, preferring the fewest parallel
/// reductions and then the outermost axis of the group's first op.
fn group_axis(ops: &[OpId], graph: &KernelGraph, edges: &[(OpId, OpId)]) -> Option<DimId> {
    let first = graph.nest(ops[0]).dims();
    first
        .iter()
        .enumerate()
        .filter(|(_, d)| partition_conflict(ops, **d, graph, edges).is_none())
        .min_by_key(|(pos, d)| (ops.iter().filter(|o| graph.nest(**o).reduction() == Some(**d)).count(), *pos))
        .map(|(_, d)| *d)
}

fn assemble(groups: &[(Vec<OpId>, Option<DimId>)], unfused: &Organism, threads: u32, graph: &KernelGraph) -> Organism {
    let roots = groups
        .iter()
        .flat_map(|(ops, axis)| {
            let nodes: Vec<Node> = ops.iter().map(|o| unfused.roots[o.index()].clone()).collect();
            match axis {
                Some(axis) => vec![Node::Partition { axis: *axis, threads, children: nodes }],
                None => nodes,
            }
        })
        .collect();
    canonicalize(&Organism::new(roots), graph)
}

pub fn max_fuse(graph: &KernelGraph, cfg: &SearchConfig) -> Organism {
    let edges = graph.flow.op_edges();
    let unfused = initial_forest(graph);
    let threads = cfg.cores;
    let mut groups: Vec<(Vec<OpId>, Option<DimId>)> = graph
        .op_ids()
        .map(|o| {
            let axis = if graph.nest(o).depth() > 0 { group_axis(&[o], graph, &edges) } else { None };
            (vec![o], axis)
        })
        .collect();
    'merge: loop {
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                if groups[a].1.is_none() || groups[b].1.is_none() {
                    continue;
                }
                let mut ops = [groups[a].0.clone(), groups[b].0.clone()].concat();
                ops.sort();
                let Some(axis) = group_axis(&ops, graph, &edges) else { continue };
                let mut next = groups.clone();
                next[a] = (ops, Some(axis));
                next.remove(b);
                if is_legal(&assemble(&next, &unfused, threads, graph), graph) {
                    groups = next;
                    continue 'merge;
                }
            }
        }
        break;
    }
    let mut org = assemble(&groups, &unfused, threads, graph);
    // Maximality is judged by legality alone, without the pruning rule.
    let fuse_cfg = SearchConfig { prune: false, thread_mode: ThreadMode::Const, ..cfg.clone() };
    loop {
        let options = neighbors(&org, graph, Mutation::AddFusion, &fuse_cfg);
        let Some(next) = options.into_iter().min_by_key(|o| o.roots.len()) else { break };
        org = next;
    }
    org
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fuseset::format_notation;

    #[test]
    fn batax_worked_example() {
        let g = corpus::load("batax").unwrap();
        let org = max_fuse(&g, &SearchConfig::default());
        assert_eq!(format_notation(&org, &g), "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}");
    }

    #[test]
    fn maximal_on_corpus() {
        let cfg = SearchConfig { prune: false, ..SearchConfig::default() };
        for (name, _) in corpus::KERNELS {
            let g = corpus::load(name).unwrap();
            let org = max_fuse(&g, &cfg);
            assert!(is_legal(&org, &g), "{name}");
            assert!(neighbors(&org, &g, Mutation::AddFusion, &cfg).is_empty(), "{name}");
        }
    }
}
