//! Crossover: a child assembled level by level from groupings of both
//! parents.

use rand::Rng;

use super::{SearchConfig, ThreadMode};
use crate::frontend::{DimId, KernelGraph, OpId};
use crate::fuseset::{admitted, canonicalize, is_legal, Node, Organism};

/// Per-op view of one parent's grouping at every level.
struct View {
    /// Ops of the root holding each op, and its partition if any.
    root: Vec<(Vec<OpId>, Option<(DimId, u32)>)>,
    /// Ops under each enclosing loop, outermost first.
    loops: Vec<Vec<Vec<OpId>>>,
}

impl View {
    fn new(org: &Organism, graph: &KernelGraph) -> Self {
        let mut root = vec![(Vec::new(), None); graph.op_count()];
        let mut loops = vec![Vec::new(); graph.op_count()];
        for r in &org.roots {
            let part = match r {
                Node::Partition { axis, threads, .. } => Some((*axis, *threads)),
                _ => None,
            };
            let ops = r.ops();
            for &o in &ops {
                root[o.index()] = (ops.clone(), part);
                loops[o.index()] =
                    org.ancestors(o).into_iter().filter(|n| n.is_loop()).map(Node::ops).collect();
            }
        }
        View { root, loops }
    }

    fn group(&self, op: OpId, slot: usize) -> &[OpId] {
        if slot == 0 {
            &self.root[op.index()].0
        } else {
            self.loops[op.index()].get(slot - 1).map_or(&[], |v| v)
        }
    }
}

fn build(views: &[View; 2], ops: &[OpId], slot: usize, graph: &KernelGraph, rng: &mut impl Rng) -> Vec<Node> {
    let mut free: Vec<OpId> = ops.to_vec();
    let mut out = Vec::new();
    for &o in ops {
        if !free.contains(&o) {
            continue;
        }
        let view = &views[rng.gen_range(0..2)];
        let group = view.group(o, slot);
        let mut taken: Vec<OpId> = free.iter().copied().filter(|x| *x == o || group.contains(x)).collect();
        taken.sort();
        free.retain(|x| !taken.contains(x));
        if slot == 0 {
            let children = build(views, &taken, 1, graph, rng);
            match view.root[o.index()].1 {
                Some((axis, threads)) => out.push(Node::Partition { axis, threads, children }),
                None => out.extend(children),
            }
        } else {
            let nest = graph.nest(o);
            if nest.depth() < slot {
                out.extend(taken.into_iter().map(Node::Op));
            } else {
                let axis = nest.axes[slot - 1].dim;
                out.push(Node::Loop { axis, children: build(views, &taken, slot + 1, graph, rng) });
            }
        }
    }
    out
}

/// Builds a child from the outermost level inward. At each level, for each
/// op not yet placed, one parent is drawn and its grouping of that op (minus
/// ops already placed) becomes a node of the child, with that parent's
/// partition axis and thread count. Illegal children are redrawn a few times
/// before falling back to parent `a`.
pub fn crossover(a: &Organism, b: &Organism, graph: &KernelGraph, cfg: &SearchConfig, rng: &mut impl Rng) -> Organism {
    let views = [View::new(a, graph), View::new(b, graph)];
    let ops: Vec<OpId> = graph.op_ids().collect();
    for _ in 0..8 {
        let mut child = Organism::new(build(&views, &ops, 0, graph, rng));
        if cfg.thread_mode == ThreadMode::Global && child.partition_count() > 0 {
            let donors: Vec<u32> = [a, b].iter().filter_map(|p| p.thread_counts().first().copied()).collect();
            child.set_all_threads(donors[rng.gen_range(0..donors.len())]);
        }
        let child = canonicalize(&child, graph);
        if is_legal(&child, graph) && (!cfg.prune || admitted(&child, graph)) {
            return child;
        }
    }
    canonicalize(a, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fuseset::{format_notation, parse_notation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_is_reachable() {
        let g = corpus::load("batax").unwrap();
        let a = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_j 3}", &g, 4).unwrap();
        let b = parse_notation("{_{p(i)}{_i{_j 1}}}{_{p(i)}{_i{_j 2}}}{_{p(j)}{_j 3}}", &g, 4).unwrap();
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kids: Vec<String> = (0..200).map(|_| format_notation(&crossover(&a, &b, &g, &cfg, &mut rng), &g)).collect();
        assert!(kids.contains(&"{_{p(i)}{_i{_j 1}}{_i{_j 2}}}{_{p(j)}{_j 3}}".to_string()));
    }

    #[test]
    fn identical_parents() {
        let g = corpus::load("gemver").unwrap();
        let x = canonicalize(&crate::fuseset::initial_forest(&g), &g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(crossover(&x, &x, &g, &SearchConfig::default(), &mut rng), x);
    }
}
