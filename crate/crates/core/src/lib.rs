//! Loop fusion, data partitioning and thread-count autotuning for sequences
//! of dense matrix-algebra operations.

pub mod frontend;
pub mod corpus;
pub mod fuseset;
pub mod fitness;
pub mod codegen;
pub mod search;
