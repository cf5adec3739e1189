//! Direct execution of the loop IR, with the same chunking and join order as
//! the emitted C.

use std::collections::HashMap;

use super::ir::{IrNode, LoopIr, StorageClass};
use super::reference::{from_storage, to_storage, Tensor};
use crate::frontend::{DataId, DataRole, DimId, KernelGraph, OpKind};

/// First index of chunk `p` of `n` elements split `np` ways.
pub fn chunk_lo(n: usize, p: usize, np: usize) -> usize {
    n * p / np
}

struct Machine<'a> {
    graph: &'a KernelGraph,
    ir: &'a LoopIr,
    extents: &'a [usize],
    buffers: Vec<Vec<f64>>,
    index: Vec<usize>,
    range: Vec<(usize, usize)>,
}

impl Machine<'_> {
    fn offset(&self, data: DataId) -> usize {
        if self.ir.classes[data.0] == StorageClass::Contracted {
            return 0;
        }
        self.graph.data_dims(data).iter().fold(0, |acc, d| acc * self.extents[d.0] + self.index[d.0])
    }

    fn read(&self, data: DataId) -> f64 {
        self.buffers[data.0][self.offset(data)]
    }

    fn fill(&mut self, data: DataId, bound: &[DimId]) {
        let dims = self.graph.data_dims(data);
        let free: Vec<DimId> = dims.iter().copied().filter(|d| !bound.contains(d)).collect();
        self.fill_rec(data, &free);
    }

    fn fill_rec(&mut self, data: DataId, free: &[DimId]) {
        match free.split_first() {
            None => {
                let at = self.offset(data);
                self.buffers[data.0][at] = 0.0;
            }
            Some((&d, rest)) => {
                let (lo, hi) = self.range[d.0];
                for v in lo..hi {
                    self.index[d.0] = v;
                    self.fill_rec(data, rest);
                }
            }
        }
    }

    fn compute(&mut self, op: crate::frontend::OpId) {
        let node = self.graph.flow.op(op);
        let a = self.read(node.operands[0].data);
        let b = node.operands.get(1).map(|x| self.read(x.data));
        let at = self.offset(node.result);
        let slot = &mut self.buffers[node.result.0][at];
        match node.kind {
            OpKind::Copy => *slot = a,
            OpKind::Add => *slot = a + b.unwrap(),
            OpKind::Subtract => *slot = a - b.unwrap(),
            OpKind::Scale => *slot = a * b.unwrap(),
            OpKind::Multiply => {
                if self.graph.nest(op).reduction().is_some() {
                    *slot += a * b.unwrap();
                } else {
                    *slot = a * b.unwrap();
                }
            }
        }
    }

    fn run(&mut self, nodes: &[IrNode], bound: &mut Vec<DimId>) {
        for node in nodes {
            match node {
                IrNode::Compute { op } => self.compute(*op),
                IrNode::Fill { data } => self.fill(*data, bound),
                IrNode::Loop { dim, body } => {
                    let (lo, hi) = self.range[dim.0];
                    bound.push(*dim);
                    for v in lo..hi {
                        self.index[dim.0] = v;
                        self.run(body, bound);
                    }
                    bound.pop();
                }
                IrNode::Parallel { dim, threads, partials, body } => {
                    let np = *threads as usize;
                    let n = self.extents[dim.0];
                    let saved: Vec<Vec<f64>> = partials.iter().map(|d| std::mem::take(&mut self.buffers[d.0])).collect();
                    let mut parts: Vec<Vec<Vec<f64>>> = vec![Vec::new(); partials.len()];
                    for p in 0..np {
                        for (k, d) in partials.iter().enumerate() {
                            self.buffers[d.0] = vec![0.0; saved[k].len()];
                        }
                        self.range[dim.0] = (chunk_lo(n, p, np), chunk_lo(n, p + 1, np));
                        self.run(body, bound);
                        for (k, d) in partials.iter().enumerate() {
                            parts[k].push(std::mem::take(&mut self.buffers[d.0]));
                        }
                    }
                    self.range[dim.0] = (0, n);
                    for (k, d) in partials.iter().enumerate() {
                        let mut joined = vec![0.0; saved[k].len()];
                        for (e, slot) in joined.iter_mut().enumerate() {
                            let mut s = 0.0;
                            for part in &parts[k] {
                                s += part[e];
                            }
                            *slot = s;
                        }
                        self.buffers[d.0] = joined;
                    }
                }
                IrNode::Join { .. } => {}
            }
        }
    }
}

/// Runs the IR on inputs in storage layout (declaration order) and returns
/// the outputs in storage layout.
pub fn interpret(ir: &LoopIr, graph: &KernelGraph, extents: &[usize], inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut buffers: Vec<Vec<f64>> = Vec::with_capacity(graph.flow.data.len());
    let mut next_input = inputs.iter();
    for d in &graph.flow.data {
        let size = match ir.classes[d.id.0] {
            StorageClass::Contracted => 1,
            _ => graph.element_count(d.id, extents),
        };
        buffers.push(match d.role {
            DataRole::Input => next_input.next().expect("one buffer per input").clone(),
            _ => vec![0.0; size],
        });
    }
    let mut m = Machine {
        graph,
        ir,
        extents,
        buffers,
        index: vec![0; extents.len()],
        range: extents.iter().map(|&n| (0, n)).collect(),
    };
    m.run(&ir.body, &mut Vec::new());
    graph
        .flow
        .data
        .iter()
        .filter(|d| d.role == DataRole::Output)
        .map(|d| std::mem::take(&mut m.buffers[d.id.0]))
        .collect()
}

/// Interprets the IR on logical inputs keyed by name and returns logical
/// outputs in declaration order.
pub fn interpret_logical(
    ir: &LoopIr,
    graph: &KernelGraph,
    extents: &[usize],
    inputs: &HashMap<String, Tensor>,
) -> Vec<Tensor> {
    let flat: Vec<Vec<f64>> = graph
        .flow
        .spec
        .inputs
        .iter()
        .map(|d| to_storage(graph, graph.flow.data_by_name(&d.name).unwrap(), &inputs[&d.name]))
        .collect();
    let outs = interpret(ir, graph, extents, &flat);
    graph
        .flow
        .spec
        .outputs
        .iter()
        .zip(outs)
        .map(|(d, v)| from_storage(graph, graph.flow.data_by_name(&d.name).unwrap(), extents, &v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::ir::{lower, lower_contracted};
    use crate::codegen::reference::{random_inputs, reference_evaluate, relative_error};
    use crate::corpus;
    use crate::fuseset::parse_notation;

    #[test]
    fn chunks_cover_range() {
        for n in [0, 1, 7, 50] {
            for np in 1..9 {
                let total: usize = (0..np).map(|p| chunk_lo(n, p + 1, np) - chunk_lo(n, p, np)).sum();
                assert_eq!(total, n);
            }
        }
    }

    #[test]
    fn mf_batax_matches_reference() {
        let g = corpus::load("batax").unwrap();
        let org = parse_notation("{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}", &g, 3).unwrap();
        let ext = [7, 5];
        let inputs = random_inputs(&g, &ext, 1);
        let want = reference_evaluate(&g.flow.spec, &inputs).unwrap();
        for ir in [lower(&org, &g), lower_contracted(&org, &g)] {
            let got = interpret_logical(&ir, &g, &ext, &inputs);
            assert!(relative_error(&got[0].data, &want[0].data) < 1e-12);
        }
    }
}
