//! Kernel language front end: parsing, dataflow construction and type
//! inference.

pub mod ast;
pub mod dataflow;
pub mod infer;
pub mod parser;
pub mod types;

use thiserror::Error;

pub use ast::{Decl, DeclaredType, Expr, KernelSpec, Orientation, Statement};
pub use dataflow::{build_dataflow, DataId, DataNode, DataRole, DataflowGraph, OpId, OpKind, OpNode, Operand};
pub use infer::{infer_types, Axis, DimId, DimInfo, KernelGraph, OpNest, Storage};
pub use parser::parse_kernel;
pub use types::ContainerType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("undeclared identifier `{name}` at {line}:{col}")]
    Undeclared { name: String, line: usize, col: usize },
    #[error("output `{0}` is never assigned")]
    OutputNotAssigned(String),
    #[error("type mismatch in op {op}: {message}")]
    TypeMismatch { op: usize, message: String },
    #[error("dimension conflict: {0}")]
    DimensionConflict(String),
    #[error("unsupported product in op {op}: {message}")]
    UnsupportedProduct { op: usize, message: String },
}

/// Parses, builds the dataflow graph and infers types in one step.
pub fn compile_kernel(text: &str) -> Result<KernelGraph, FrontendError> {
    let spec = parse_kernel(text)?;
    infer_types(build_dataflow(&spec))
}
