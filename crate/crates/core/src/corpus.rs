//! Bundled kernel definitions from the `kernels/` directory.

use crate::frontend::{compile_kernel, FrontendError, KernelGraph};

macro_rules! kernel {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../kernels/", $name, ".bto")))
    };
}

/// `(file stem, source)` for every bundled kernel.
pub const KERNELS: &[(&str, &str)] = &[
    kernel!("axpydot"),
    kernel!("vadd"),
    kernel!("waxpby"),
    kernel!("atax"),
    kernel!("bicgk"),
    kernel!("dgemv"),
    kernel!("dgemvt"),
    kernel!("gemver"),
    kernel!("gesummv"),
    kernel!("batax"),
];

/// The benchmark kernels, without BATAX.
pub const TABLE: &[&str] = &["axpydot", "vadd", "waxpby", "atax", "bicgk", "dgemv", "dgemvt", "gemver", "gesummv"];

/// Kernels small enough for exhaustive enumeration.
pub const SMALL: &[&str] = &["atax", "axpydot", "bicgk", "vadd", "waxpby"];

pub fn source(name: &str) -> Option<&'static str> {
    KERNELS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Compiles a bundled kernel; panics on unknown names.
pub fn load(name: &str) -> Result<KernelGraph, FrontendError> {
    compile_kernel(source(name).unwrap_or_else(|| panic!("no bundled kernel `{name}`")))
}
