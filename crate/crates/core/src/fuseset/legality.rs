//! Legality of fuse-set organisms and the shared-operand pruning rule.

use std::fmt;

use super::tree::{Node, Organism};
use crate::frontend::{DimId, KernelGraph, OpId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Malformed tree: missing or repeated ops, misplaced partitions, loop
    /// paths that differ from an op's nest.
    Structure,
    /// A fused group is not convex in the dataflow graph, or siblings run
    /// before their producers.
    Dependence,
    /// A consumer sits inside the loop that accumulates its operand.
    Reduction,
    /// No consistent joint partition exists for a parallel region.
    Partition,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Structure => "structure",
            Rule::Dependence => "dependence",
            Rule::Reduction => "reduction",
            Rule::Partition => "partition",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    pub message: String,
    pub ops: Vec<OpId>,
    pub axis: Option<DimId>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation: {}", self.rule, self.message)
    }
}

impl std::error::Error for Diagnostic {}

fn fail(rule: Rule, message: String, ops: Vec<OpId>, axis: Option<DimId>) -> Result<(), Diagnostic> {
    Err(Diagnostic { rule, message, ops, axis })
}

fn list(ops: &[OpId]) -> String {
    let v: Vec<String> = ops.iter().map(OpId::to_string).collect();
    v.join(",")
}

/// Checks an organism against every legality rule, reporting the first
/// violation found.
pub fn fusion_legal(org: &Organism, graph: &KernelGraph) -> Result<(), Diagnostic> {
    check_structure(org, graph)?;
    let reach = graph.flow.reachability();
    let edges = graph.flow.op_edges();
    check_dependence(org, graph, &reach, &edges)?;
    check_reduction(org, graph, &edges)?;
    check_partitions(org, graph, &edges)?;
    check_paths(org, graph)
}

pub fn is_legal(org: &Organism, graph: &KernelGraph) -> bool {
    fusion_legal(org, graph).is_ok()
}

fn check_structure(org: &Organism, graph: &KernelGraph) -> Result<(), Diagnostic> {
    let mut seen = vec![0usize; graph.op_count()];
    for o in org.ops() {
        seen[o.index()] += 1;
    }
    for (n, &count) in seen.iter().enumerate() {
        if count != 1 {
            let what = if count == 0 { "missing" } else { "repeated" };
            return fail(Rule::Structure, format!("op {} is {what}", n + 1), vec![OpId(n + 1)], None);
        }
    }
    let mut bad: Option<(String, Vec<OpId>)> = None;
    org.walk(&mut |n| {
        if bad.is_some() {
            return;
        }
        match n {
            Node::Op(_) => {}
            Node::Loop { children, .. } | Node::Partition { children, .. } if children.is_empty() => {
                bad = Some(("empty fuse set".into(), vec![]));
            }
            Node::Loop { children, .. } => {
                if let Some(p) = children.iter().find(|c| c.is_partition()) {
                    bad = Some(("partition nested inside a loop".into(), p.ops()));
                }
            }
            Node::Partition { children, threads, .. } => {
                if *threads == 0 {
                    bad = Some(("partition with zero threads".into(), n.ops()));
                } else if let Some(c) = children.iter().find(|c| !c.is_loop()) {
                    bad = Some(("partition children must be loops".into(), c.ops()));
                }
            }
        }
    });
    match bad {
        Some((message, ops)) => fail(Rule::Structure, message, ops, None),
        None => Ok(()),
    }
}

fn check_dependence(
    org: &Organism,
    graph: &KernelGraph,
    reach: &[Vec<bool>],
    edges: &[(OpId, OpId)],
) -> Result<(), Diagnostic> {
    let mut groups: Vec<Vec<OpId>> = Vec::new();
    org.walk(&mut |n| {
        if !matches!(n, Node::Op(_)) {
            groups.push(n.ops());
        }
    });
    for set in &groups {
        for other in graph.op_ids().filter(|o| !set.contains(o)) {
            let out = set.iter().any(|a| reach[a.index()][other.index()]);
            let back = set.iter().any(|b| reach[other.index()][b.index()]);
            if out && back {
                return fail(
                    Rule::Dependence,
                    format!("ops {} cannot share a fuse set: dependence through op {other}", list(set)),
                    vec![other],
                    None,
                );
            }
        }
    }
    let mut levels: Vec<&[Node]> = vec![&org.roots];
    org.walk(&mut |n| {
        if !n.children().is_empty() {
            levels.push(n.children());
        }
    });
    for level in levels {
        let sets: Vec<Vec<OpId>> = level.iter().map(Node::ops).collect();
        for (a, early) in sets.iter().enumerate() {
            for late in &sets[a + 1..] {
                if let Some((p, c)) = edges.iter().find(|(p, c)| late.contains(p) && early.contains(c)) {
                    return fail(
                        Rule::Dependence,
                        format!("op {c} is scheduled before its producer op {p}"),
                        vec![*p, *c],
                        None,
                    );
                }
            }
        }
    }
    Ok(())
}

fn result_name(graph: &KernelGraph, op: OpId) -> &str {
    &graph.flow.data_node(graph.flow.op(op).result).name
}

fn check_reduction(org: &Organism, graph: &KernelGraph, edges: &[(OpId, OpId)]) -> Result<(), Diagnostic> {
    let mut found: Option<Diagnostic> = None;
    org.walk(&mut |n| {
        if found.is_some() {
            return;
        }
        if let Node::Loop { axis, .. } = n {
            let ops = n.ops();
            for &(p, c) in edges {
                if ops.contains(&p) && ops.contains(&c) && graph.nest(p).reduction() == Some(*axis) {
                    found = Some(Diagnostic {
                        rule: Rule::Reduction,
                        message: format!(
                            "op {c} reads {} inside the {} loop that accumulates it in op {p}",
                            result_name(graph, p),
                            graph.label(*axis)
                        ),
                        ops: vec![p, c],
                        axis: Some(*axis),
                    });
                    return;
                }
            }
        }
    });
    found.map_or(Ok(()), Err)
}

/// Why a set of ops cannot share a partition along `axis`, if it cannot.
pub(crate) fn partition_conflict(
    ops: &[OpId],
    axis: DimId,
    graph: &KernelGraph,
    edges: &[(OpId, OpId)],
) -> Option<Diagnostic> {
    if let Some(&o) = ops.iter().find(|o| !graph.nest(**o).contains(axis)) {
        return Some(Diagnostic {
            rule: Rule::Partition,
            message: format!("op {o} has no {} axis to partition", graph.label(axis)),
            ops: vec![o],
            axis: Some(axis),
        });
    }
    let &(p, c) = edges
        .iter()
        .find(|(p, c)| ops.contains(p) && ops.contains(c) && graph.nest(*p).reduction() == Some(axis))?;
    Some(Diagnostic {
        rule: Rule::Partition,
        message: format!(
            "op {c} consumes {} before the parallel reduction over p({}) in op {p} is joined",
            result_name(graph, p),
            graph.label(axis)
        ),
        ops: vec![p, c],
        axis: Some(axis),
    })
}

fn check_partitions(org: &Organism, graph: &KernelGraph, edges: &[(OpId, OpId)]) -> Result<(), Diagnostic> {
    for r in &org.roots {
        if let Node::Partition { axis, .. } = r {
            if let Some(d) = partition_conflict(&r.ops(), *axis, graph, edges) {
                return Err(d);
            }
        }
    }
    Ok(())
}

fn check_paths(org: &Organism, graph: &KernelGraph) -> Result<(), Diagnostic> {
    if let Some(p) = org.roots.iter().flat_map(|r| r.children().iter()).find(|c| c.is_partition()) {
        return fail(Rule::Structure, "nested partition".into(), p.ops(), None);
    }
    for op in graph.op_ids() {
        let axes = org.loop_axes(op);
        let nest = graph.nest(op).dims();
        if axes != nest {
            let show = |v: &[DimId]| v.iter().map(|d| graph.label(*d)).collect::<Vec<_>>().join(",");
            return fail(
                Rule::Structure,
                format!("op {op} sits in loops [{}] but its nest is [{}]", show(&axes), show(&nest)),
                vec![op],
                None,
            );
        }
    }
    Ok(())
}

/// True when the two ops read or write a common data node.
pub fn share_operand(a: OpId, b: OpId, graph: &KernelGraph) -> bool {
    let ta = graph.flow.touched(a);
    graph.flow.touched(b).iter().any(|d| ta.contains(d))
}

/// Pruning rule: the children of every fuse set must be connected through
/// shared operands.
pub fn admitted(org: &Organism, graph: &KernelGraph) -> bool {
    let mut ok = true;
    org.walk(&mut |n| {
        let children = n.children();
        if !ok || children.len() < 2 {
            return;
        }
        let sets: Vec<Vec<OpId>> = children.iter().map(Node::ops).collect();
        let linked =
            |x: usize, y: usize| sets[x].iter().any(|&a| sets[y].iter().any(|&b| share_operand(a, b, graph)));
        let mut reached = vec![false; sets.len()];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..sets.len() {
                if !reached[y] && linked(x, y) {
                    reached[y] = true;
                    stack.push(y);
                }
            }
        }
        ok = reached.iter().all(|&r| r);
    });
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fuseset::notation::parse_notation;

    fn check(text: &str) -> Result<(), Diagnostic> {
        let g = corpus::load("batax").unwrap();
        fusion_legal(&parse_notation(text, &g, 4).unwrap(), &g)
    }

    #[test]
    fn batax_listing() {
        assert!(check("{{1}} {{2}} {{3}}").is_ok());
        assert!(check("{{1} {2}} {{3}}").is_ok());
        let d = check("{{1} {3}} {{2}}").unwrap_err();
        assert_eq!(d.rule, Rule::Dependence);
        assert!(d.message.contains("through op 2"), "{d}");
        assert_eq!(check("{{1 2}} {{3}}").unwrap_err().rule, Rule::Reduction);
        assert_eq!(check("{{1} {2} {3}}").unwrap_err().rule, Rule::Reduction);
        assert_eq!(check("{{1 2 3}}").unwrap_err().rule, Rule::Reduction);
    }

    #[test]
    fn partitions() {
        assert!(check("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}").is_ok());
        assert_eq!(check("{_{p(j)}{_i{_j 1}{_j 2}}}{_j 3}").unwrap_err().rule, Rule::Partition);
        assert!(check("{_{p(j)}{_i{_j 1}}}{_i{_j 2}}{_j 3}").is_ok());
        assert_eq!(check("{_{p(i)} 1}{_i{_j 2}}{_j 3}").unwrap_err().rule, Rule::Structure);
    }

    #[test]
    fn structure() {
        assert_eq!(check("{_i{_j 1}}{_j 3}").unwrap_err().rule, Rule::Structure);
        assert_eq!(check("{_j 1}{_i{_j 2}}{_j 3}").unwrap_err().rule, Rule::Structure);
        assert_eq!(check("{_i{_j 1}}{_i{_j 2}}{_j 3 2}").unwrap_err().rule, Rule::Structure);
    }

    #[test]
    fn operand_sharing() {
        let g = corpus::load("batax").unwrap();
        assert!(share_operand(OpId(1), OpId(2), &g));
        assert!(!share_operand(OpId(1), OpId(3), &g));
        assert!(share_operand(OpId(3), OpId(3), &g));
    }
}
