//! Lowering of organisms to loop IR, array contraction, C emission, and the
//! numerical oracles used to validate generated code.

pub mod emit;
pub mod interp;
pub mod ir;
pub mod reference;

pub use emit::{emit_c, GeneratedKernel};
pub use interp::{chunk_lo, interpret, interpret_logical};
pub use ir::{contract_arrays, lower, lower_contracted, IrNode, LoopIr, StorageClass};
pub use reference::{
    from_storage, logical_shape, random_inputs, reference_evaluate, relative_error, to_storage, uniform_extents,
    EvalError, Tensor,
};

use crate::frontend::KernelGraph;
use crate::fuseset::Organism;

/// Lowers, contracts and emits in one step.
pub fn generate(org: &Organism, graph: &KernelGraph) -> GeneratedKernel {
    emit_c(&lower_contracted(org, graph), graph)
}

/// Largest relative error of the interpreted, contracted IR against the
/// reference evaluator on seeded random inputs.
pub fn reference_error(org: &Organism, graph: &KernelGraph, extents: &[usize], seed: u64) -> Result<f64, EvalError> {
    let inputs = random_inputs(graph, extents, seed);
    let want = reference_evaluate(&graph.flow.spec, &inputs)?;
    let got = interpret_logical(&lower_contracted(org, graph), graph, extents, &inputs);
    Ok(got.iter().zip(&want).map(|(g, w)| relative_error(&g.data, &w.data)).fold(0.0, f64::max))
}
