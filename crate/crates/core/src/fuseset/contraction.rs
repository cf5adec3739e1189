//! Which temporaries an organism lets the code generator contract.

use super::tree::{Node, Organism};
use crate::frontend::{DataId, DimId, KernelGraph};

/// Temporaries whose producer and every consumer share enclosing loops that
/// cover all of the temporary's dimensions.
pub fn contracted_temporaries(org: &Organism, graph: &KernelGraph) -> Vec<DataId> {
    let mut out = Vec::new();
    for d in &graph.flow.data {
        if !graph.is_temporary(d.id) {
            continue;
        }
        let dims = graph.data_dims(d.id);
        let Some(producer) = graph.flow.producer(d.id) else { continue };
        let consumers = graph.flow.consumers(d.id);
        if dims.is_empty() || consumers.is_empty() {
            continue;
        }
        let paths: Option<Vec<Vec<usize>>> =
            std::iter::once(producer).chain(consumers).map(|o| org.path_to(o)).collect();
        let Some(paths) = paths else { continue };
        let mut common = paths[0].clone();
        for p in &paths[1..] {
            let n = common.iter().zip(p).take_while(|(a, b)| a == b).count();
            common.truncate(n);
        }
        // The last shared index may be a leaf only when all paths coincide,
        // which cannot happen for distinct ops.
        let shared: Vec<DimId> = org
            .nodes_on(&common)
            .into_iter()
            .filter(|n| matches!(n, Node::Loop { .. }))
            .filter_map(Node::axis)
            .collect();
        if dims.iter().all(|x| shared.contains(x)) {
            out.push(d.id);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fuseset::notation::parse_notation;

    fn names(kernel: &str, text: &str) -> Vec<String> {
        let g = corpus::load(kernel).unwrap();
        let org = parse_notation(text, &g, 2).unwrap();
        contracted_temporaries(&org, &g).iter().map(|d| g.flow.data_node(*d).name.clone()).collect()
    }

    #[test]
    fn batax_cases() {
        assert!(names("batax", "{{1}} {{2}} {{3}}").is_empty());
        assert_eq!(names("batax", "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}"), ["t0"]);
    }

    #[test]
    fn fused_vadd() {
        assert_eq!(names("vadd", "{_k 1 2}"), ["t0"]);
        assert!(names("vadd", "{_k 1}{_k 2}").is_empty());
    }
}
