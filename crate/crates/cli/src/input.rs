use std::path::Path;

use fusetune::codegen::{generate, reference_error, uniform_extents};
use fusetune::corpus;
use fusetune::frontend::{compile_kernel, KernelGraph};
use fusetune::fuseset::{fusion_legal, Organism};

use crate::Failure;

pub const TOLERANCE: f64 = 1e-10;

/// Reads a kernel from a file, falling back to the bundled kernel of that
/// name.
pub fn load_kernel(arg: &str) -> Result<(String, KernelGraph), Failure> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {arg}: {e}")))?
    } else if let Some(src) = corpus::source(arg) {
        src.to_string()
    } else {
        return Err(Failure::Usage(format!("no kernel file or bundled kernel named `{arg}`")));
    };
    let graph = compile_kernel(&text).map_err(|e| Failure::Invalid(format!("{arg}: {e}")))?;
    Ok((text, graph))
}

/// `1000` for every dimension, `1000,500` in dimension order, or
/// `M=1000,N=500` by extent name.
pub fn parse_extents(text: &str, graph: &KernelGraph) -> Result<Vec<usize>, Failure> {
    let names: Vec<&str> = graph.dims.iter().map(|d| d.extent.as_str()).collect();
    let bad = |m: String| Failure::Usage(format!("--extents: {m} (dimensions: {})", names.join(",")));
    let number = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("`{s}` is not a non-negative integer")));
    let parts: Vec<&str> = text.split(',').collect();
    if parts.iter().all(|p| p.contains('=')) {
        let mut out = vec![None; names.len()];
        for p in parts {
            let (k, v) = p.split_once('=').unwrap();
            let at = names.iter().position(|n| *n == k.trim()).ok_or_else(|| bad(format!("unknown extent `{k}`")))?;
            out[at] = Some(number(v)?);
        }
        return out
            .into_iter()
            .zip(&names)
            .map(|(v, n)| v.ok_or_else(|| bad(format!("missing extent {n}"))))
            .collect();
    }
    let values = parts.into_iter().map(number).collect::<Result<Vec<_>, _>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; names.len()]),
        n if n == names.len() => Ok(values),
        n => Err(bad(format!("{n} values given"))),
    }
}

/// Checks the lowered organism against the reference evaluator on a few
/// small shapes, including degenerate unit extents.
pub fn validate(org: &Organism, graph: &KernelGraph) -> Result<f64, Failure> {
    let mut shapes = vec![uniform_extents(graph, 1), uniform_extents(graph, 7)];
    shapes.push((0..graph.dims.len()).map(|d| 3 + 2 * d).collect());
    let mut worst: f64 = 0.0;
    for (n, ext) in shapes.iter().enumerate() {
        let err = reference_error(org, graph, ext, n as u64).map_err(|e| Failure::Invalid(format!("validation: {e}")))?;
        if !(err <= TOLERANCE) {
            return Err(Failure::Invalid(format!(
                "validation failed at extents {ext:?}: relative error {err:e} exceeds {TOLERANCE:e}"
            )));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn check_legal(org: &Organism, graph: &KernelGraph) -> Result<(), Failure> {
    fusion_legal(org, graph).map_err(|d| {
        let ops: Vec<String> = d.ops.iter().map(|o| o.to_string()).collect();
        Failure::Invalid(format!("illegal organism: {d} [ops {}]", ops.join(",")))
    })
}

/// Validates (unless told not to) and writes C for `org`.
pub fn write_c(path: &Path, org: &Organism, graph: &KernelGraph, validate_first: bool) -> Result<(), Failure> {
    if validate_first {
        validate(org, graph)?;
    }
    let kernel = generate(org, graph);
    std::fs::write(path, kernel.source).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}
