//! Memory-traffic cost model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{DataId, KernelGraph};
use crate::fuseset::{contracted_temporaries, format_notation, Node, Organism};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    pub cores: u32,
    pub bytes_per_scalar: f64,
    /// Bytes per unit of cost on one core.
    pub bandwidth: f64,
    /// Launch cost of one parallel region, in scalar elements.
    pub overhead_elements: f64,
    /// Extent of each dimension, indexed by `DimId`.
    pub extents: Vec<usize>,
}

impl MachineModel {
    pub fn new(extents: Vec<usize>, cores: u32) -> Self {
        MachineModel { cores, bytes_per_scalar: 8.0, bandwidth: 1.0, overhead_elements: 5000.0, extents }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("no extent bound for dimension `{0}`")]
    UnboundExtent(String),
    #[error("machine model parameter `{0}` must be positive")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSource {
    Analytic,
    Empirical,
}

/// Cost of one root of the organism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub notation: String,
    /// Elements moved, before any division by thread count.
    pub elements: f64,
    pub streaming: f64,
    pub partials: f64,
    pub overhead: f64,
}

impl NodeCost {
    pub fn total(&self) -> f64 {
        self.streaming + self.partials + self.overhead
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    pub source: CostSource,
    pub nodes: Vec<NodeCost>,
    /// Temporaries demoted to scalars, which move no memory.
    pub contracted: Vec<String>,
    pub parallel_regions: usize,
}

impl CostReport {
    pub fn measured(seconds: f64, org: &Organism, graph: &KernelGraph) -> Self {
        CostReport {
            total: seconds,
            source: CostSource::Empirical,
            nodes: Vec::new(),
            contracted: contracted_temporaries(org, graph).iter().map(|d| graph.flow.data_node(*d).name.clone()).collect(),
            parallel_regions: org.partition_count(),
        }
    }
}

fn root_cost(root: &Node, graph: &KernelGraph, machine: &MachineModel, contracted: &[DataId]) -> NodeCost {
    let mut access: BTreeMap<DataId, (bool, bool)> = BTreeMap::new();
    for op in root.ops() {
        let node = graph.flow.op(op);
        for x in &node.operands {
            access.entry(x.data).or_default().0 = true;
        }
        access.entry(node.result).or_default().1 = true;
    }
    let size = |d: DataId| graph.element_count(d, &machine.extents) as f64;
    let elements: f64 = access
        .iter()
        .filter(|(d, _)| !contracted.contains(d))
        .map(|(d, (r, w))| size(*d) * (*r as u8 + *w as u8) as f64)
        .sum();
    let unit = machine.bytes_per_scalar / machine.bandwidth;
    let notation = format_notation(&Organism::new(vec![root.clone()]), graph);
    match root {
        Node::Partition { axis, threads, .. } => {
            let t = f64::from(*threads);
            let partial_elements: f64 = root
                .ops()
                .into_iter()
                .filter(|o| graph.nest(*o).reduction() == Some(*axis))
                .map(|o| size(graph.flow.op(o).result))
                .sum();
            NodeCost {
                notation,
                elements,
                streaming: elements * unit / f64::from((*threads).min(machine.cores)),
                partials: t * partial_elements * unit,
                overhead: machine.overhead_elements * unit,
            }
        }
        _ => NodeCost { notation, elements, streaming: elements * unit, partials: 0.0, overhead: 0.0 },
    }
}

/// Traffic of each root: every non-contracted array it touches is streamed
/// once per read and once per write. Parallel regions divide streaming by
/// their thread count, pay one launch overhead and move one partial copy of
/// each reduced result per thread.
pub fn estimate_cost(org: &Organism, graph: &KernelGraph, machine: &MachineModel) -> Result<CostReport, CostError> {
    if let Some(d) = graph.dims.get(machine.extents.len()) {
        return Err(CostError::UnboundExtent(d.label.clone()));
    }
    if machine.cores == 0 {
        return Err(CostError::InvalidModel("cores"));
    }
    if !(machine.bytes_per_scalar > 0.0) {
        return Err(CostError::InvalidModel("bytes_per_scalar"));
    }
    if !(machine.bandwidth > 0.0) {
        return Err(CostError::InvalidModel("bandwidth"));
    }
    if !(machine.overhead_elements >= 0.0) {
        return Err(CostError::InvalidModel("overhead_elements"));
    }
    let contracted = contracted_temporaries(org, graph);
    let nodes: Vec<NodeCost> = org.roots.iter().map(|r| root_cost(r, graph, machine, &contracted)).collect();
    Ok(CostReport {
        total: nodes.iter().map(NodeCost::total).sum(),
        source: CostSource::Analytic,
        nodes,
        contracted: contracted.iter().map(|d| graph.flow.data_node(*d).name.clone()).collect(),
        parallel_regions: org.partition_count(),
    })
}
