//! Fuse-set organisms: representation, notation, legality, partitioning and
//! enumeration.

pub mod contraction;
pub mod enumerate;
pub mod legality;
pub mod notation;
pub mod partition;
pub mod tree;

pub use contraction::contracted_temporaries;
pub use enumerate::{digit_space_size, enumerate_space, enumerate_structures, expand_threads, EnumerateError, Limits, ThreadSpace};
pub use legality::{admitted, fusion_legal, is_legal, share_operand, Diagnostic, Rule};
pub use notation::{format_notation, organism_key, parse_notation, NotationError};
pub use partition::{enumerate_partitionings, joint_partitions, PartitionChoice};
pub use tree::{canonicalize, initial_forest, Node, Organism};
