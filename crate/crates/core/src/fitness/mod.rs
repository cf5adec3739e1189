//! Fitness functions behind one interface: the analytic traffic model and
//! the empirical timer, plus memoization on canonical keys.

pub mod analytic;
pub mod cache;
pub mod empirical;

pub use analytic::{estimate_cost, CostError, CostReport, CostSource, MachineModel, NodeCost};
pub use cache::{CacheStats, Cached, Outcome};
pub use empirical::{measure_empirical, CompiledKernel, EmpiricalError, EmpiricalFitness, SourceHook, Toolchain};

use serde::{Deserialize, Serialize};

use crate::frontend::KernelGraph;
use crate::fuseset::Organism;

/// Result of scoring one organism. Failures score `+inf` and carry a
/// diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub report: Option<CostReport>,
    pub diagnostic: Option<String>,
}

impl Evaluation {
    pub fn ok(report: CostReport) -> Self {
        Evaluation { fitness: report.total, report: Some(report), diagnostic: None }
    }

    pub fn failed(diagnostic: impl Into<String>) -> Self {
        Evaluation { fitness: f64::INFINITY, report: None, diagnostic: Some(diagnostic.into()) }
    }
}

pub trait Fitness: Send + Sync {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation;
    /// Whether evaluations may run concurrently.
    fn parallel_safe(&self) -> bool;
    /// Whether equal inputs always give equal results.
    fn deterministic(&self) -> bool;
    fn name(&self) -> &'static str;
    /// Everything besides the organism that the result depends on.
    fn context(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFitness {
    pub machine: MachineModel,
}

impl AnalyticFitness {
    pub fn new(machine: MachineModel) -> Self {
        AnalyticFitness { machine }
    }
}

impl Fitness for AnalyticFitness {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
        match estimate_cost(org, graph, &self.machine) {
            Ok(r) => Evaluation::ok(r),
            Err(e) => Evaluation::failed(e.to_string()),
        }
    }

    fn parallel_safe(&self) -> bool {
        true
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "analytic"
    }

    fn context(&self) -> String {
        format!("{:?}", self.machine)
    }
}

impl<T: Fitness + ?Sized> Fitness for Box<T> {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
        (**self).evaluate(org, graph)
    }

    fn parallel_safe(&self) -> bool {
        (**self).parallel_safe()
    }

    fn deterministic(&self) -> bool {
        (**self).deterministic()
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn context(&self) -> String {
        (**self).context()
    }
}
