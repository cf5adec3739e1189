//! Compiles generated C with an external toolchain, validates its output
//! against the reference evaluator and times it.

use std::fmt;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::{CostReport, Evaluation, Fitness};
use crate::codegen::{from_storage, generate, random_inputs, reference_evaluate, relative_error, to_storage};
use crate::frontend::{DataRole, KernelGraph};
use crate::fuseset::Organism;

pub const DEFAULT_TEMPLATE: &str = "{cc} -O3 -fopenmp {src} -o {bin}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub cc: String,
    /// Command with `{cc}`, `{src}` and `{bin}` placeholders.
    pub template: String,
}

impl Toolchain {
    /// Reads `CC` and `FUSETUNE_CC_TEMPLATE`, defaulting to `cc` and
    /// [`DEFAULT_TEMPLATE`].
    pub fn from_env() -> Self {
        Toolchain {
            cc: std::env::var("CC").unwrap_or_else(|_| "cc".into()),
            template: std::env::var("FUSETUNE_CC_TEMPLATE").unwrap_or_else(|_| DEFAULT_TEMPLATE.into()),
        }
    }

    /// The environment toolchain, if its compiler runs and supports OpenMP.
    pub fn detect() -> Option<Self> {
        let tc = Self::from_env();
        tc.probe().ok().map(|_| tc)
    }

    /// Compiles and runs a one-line OpenMP program.
    pub fn probe(&self) -> Result<(), EmpiricalError> {
        let dir = tempfile::tempdir().map_err(io)?;
        let src = dir.path().join("probe.c");
        std::fs::write(&src, "#include <omp.h>\nint main(void) { return omp_get_max_threads() > 0 ? 0 : 1; }\n")
            .map_err(io)?;
        let bin = dir.path().join("probe");
        self.compile(&src, &bin)?;
        run(&bin, &[]).map(|_| ())
    }

    pub fn command(&self, src: &Path, bin: &Path) -> Vec<String> {
        self.template
            .split_whitespace()
            .map(|w| {
                w.replace("{cc}", &self.cc)
                    .replace("{src}", &src.to_string_lossy())
                    .replace("{bin}", &bin.to_string_lossy())
            })
            .collect()
    }

    pub fn compile(&self, src: &Path, bin: &Path) -> Result<(), EmpiricalError> {
        let argv = self.command(src, bin);
        let (prog, args) = argv.split_first().ok_or_else(|| EmpiricalError::Compile("empty command template".into()))?;
        let out = Command::new(prog)
            .args(args)
            .output()
            .map_err(|e| EmpiricalError::Compile(format!("cannot run `{prog}`: {e}")))?;
        if out.status.success() {
            Ok(())
        } else {
            Err(EmpiricalError::Compile(String::from_utf8_lossy(&out.stderr).trim().to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpiricalError {
    #[error("compile failure: {0}")]
    Compile(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("numerical mismatch: relative error {error:e} exceeds {tolerance:e}")]
    Mismatch { error: f64, tolerance: f64 },
    #[error("i/o failure: {0}")]
    Io(String),
}

fn io(e: std::io::Error) -> EmpiricalError {
    EmpiricalError::Io(e.to_string())
}

/// Rewrites generated source before compilation.
pub type SourceHook = Arc<dyn Fn(&mut String) + Send + Sync>;

fn run(bin: &Path, args: &[String]) -> Result<String, EmpiricalError> {
    let out = Command::new(bin).args(args).output().map_err(|e| EmpiricalError::Runtime(e.to_string()))?;
    if !out.status.success() {
        return Err(EmpiricalError::Runtime(format!(
            "exit {}: {}",
            out.status.code().map_or("by signal".into(), |c| c.to_string()),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// A generated kernel compiled to an executable in a private directory.
pub struct CompiledKernel {
    dir: tempfile::TempDir,
    bin: std::path::PathBuf,
}

impl CompiledKernel {
    pub fn build(
        org: &Organism,
        graph: &KernelGraph,
        toolchain: &Toolchain,
        hook: Option<&SourceHook>,
    ) -> Result<Self, EmpiricalError> {
        let mut source = generate(org, graph).source;
        if let Some(h) = hook {
            h(&mut source);
        }
        let dir = tempfile::tempdir().map_err(io)?;
        let (src, bin) = (dir.path().join("kernel.c"), dir.path().join("kernel"));
        std::fs::write(&src, &source).map_err(io)?;
        toolchain.compile(&src, &bin)?;
        Ok(CompiledKernel { dir, bin })
    }

    /// Runs once on seeded random inputs and returns the largest relative
    /// error of any output against the reference evaluator.
    pub fn check(&self, graph: &KernelGraph, extents: &[usize], seed: u64) -> Result<f64, EmpiricalError> {
        let inputs = random_inputs(graph, extents, seed);
        let mut blob = Vec::new();
        for d in &graph.flow.spec.inputs {
            let id = graph.flow.data_by_name(&d.name).expect("declared");
            for v in to_storage(graph, id, &inputs[&d.name]) {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let (inp, outp) = (self.dir.path().join("in.bin"), self.dir.path().join("out.bin"));
        std::fs::write(&inp, blob).map_err(io)?;
        let mut args: Vec<String> = extents.iter().map(|e| e.to_string()).collect();
        args.extend(["-i".into(), inp.to_string_lossy().into(), "-o".into(), outp.to_string_lossy().into()]);
        args.extend(["-r".into(), "0".into()]);
        run(&self.bin, &args)?;

        let want = reference_evaluate(&graph.flow.spec, &inputs).map_err(|e| EmpiricalError::Runtime(e.to_string()))?;
        let raw = std::fs::read(&outp).map_err(io)?;
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut error: f64 = 0.0;
        for (d, w) in graph.flow.data.iter().filter(|d| d.role == DataRole::Output).zip(&want) {
            let n = graph.element_count(d.id, extents);
            let flat: Vec<f64> = values.by_ref().take(n).collect();
            if flat.len() != n {
                return Err(EmpiricalError::Runtime("output file too short".into()));
            }
            error = error.max(relative_error(&from_storage(graph, d.id, extents, &flat).data, &w.data));
        }
        Ok(error)
    }

    /// Minimum seconds over `reps` timed runs on generated inputs.
    pub fn time(&self, extents: &[usize], reps: u32) -> Result<f64, EmpiricalError> {
        let mut args: Vec<String> = extents.iter().map(|e| e.to_string()).collect();
        args.extend(["-r".into(), reps.max(1).to_string()]);
        let stdout = run(&self.bin, &args)?;
        stdout
            .lines()
            .find_map(|l| l.strip_prefix("seconds "))
            .and_then(|w| w.trim().parse().ok())
            .ok_or_else(|| EmpiricalError::Runtime(format!("unparseable timing output `{}`", stdout.trim())))
    }
}

fn measure(
    org: &Organism,
    graph: &KernelGraph,
    toolchain: &Toolchain,
    extents: &[usize],
    reps: u32,
    tolerance: f64,
    hook: Option<&SourceHook>,
) -> Result<f64, EmpiricalError> {
    let kernel = CompiledKernel::build(org, graph, toolchain, hook)?;
    let error = kernel.check(graph, extents, 0x5eed)?;
    if !(error <= tolerance) {
        return Err(EmpiricalError::Mismatch { error, tolerance });
    }
    kernel.time(extents, reps)
}

/// Minimum wall-clock seconds over `reps` timed runs, after a validation
/// run against the reference evaluator at relative tolerance 1e-10.
pub fn measure_empirical(
    org: &Organism,
    graph: &KernelGraph,
    toolchain: &Toolchain,
    extents: &[usize],
    reps: u32,
) -> Result<CostReport, EmpiricalError> {
    let s = measure(org, graph, toolchain, extents, reps, 1e-10, None)?;
    Ok(CostReport::measured(s, org, graph))
}

pub struct EmpiricalFitness {
    pub toolchain: Toolchain,
    pub extents: Vec<usize>,
    pub reps: u32,
    pub tolerance: f64,
    pub hook: Option<SourceHook>,
    /// Held for the whole of each evaluation so that only one candidate
    /// runs at a time.
    exclusive: Mutex<()>,
}

impl fmt::Debug for EmpiricalFitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmpiricalFitness")
            .field("toolchain", &self.toolchain)
            .field("extents", &self.extents)
            .field("reps", &self.reps)
            .field("tolerance", &self.tolerance)
            .field("hook", &self.hook.is_some())
            .finish()
    }
}

impl EmpiricalFitness {
    pub fn new(toolchain: Toolchain, extents: Vec<usize>, reps: u32) -> Self {
        EmpiricalFitness { toolchain, extents, reps, tolerance: 1e-10, hook: None, exclusive: Mutex::new(()) }
    }

    pub fn with_hook(mut self, hook: SourceHook) -> Self {
        self.hook = Some(hook);
        self
    }
}

impl Fitness for EmpiricalFitness {
    fn evaluate(&self, org: &Organism, graph: &KernelGraph) -> Evaluation {
        let _guard = self.exclusive.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(d) = graph.dims.get(self.extents.len()) {
            return Evaluation::failed(format!("no extent bound for dimension `{}`", d.label));
        }
        match measure(org, graph, &self.toolchain, &self.extents, self.reps, self.tolerance, self.hook.as_ref()) {
            Ok(s) => Evaluation::ok(CostReport::measured(s, org, graph)),
            Err(e) => Evaluation::failed(e.to_string()),
        }
    }

    fn parallel_safe(&self) -> bool {
        false
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str {
        "empirical"
    }

    fn context(&self) -> String {
        format!("{:?} {:?} reps={}", self.toolchain, self.extents, self.reps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_substitution() {
        let tc = Toolchain { cc: "gcc-13".into(), template: DEFAULT_TEMPLATE.into() };
        assert_eq!(tc.command(Path::new("/t/k.c"), Path::new("/t/k")), [
            "gcc-13", "-O3", "-fopenmp", "/t/k.c", "-o", "/t/k"
        ]);
    }

    #[test]
    fn missing_compiler_is_a_compile_error() {
        let tc = Toolchain { cc: "/nonexistent/cc".into(), template: DEFAULT_TEMPLATE.into() };
        assert!(matches!(tc.compile(Path::new("a.c"), Path::new("a")), Err(EmpiricalError::Compile(_))));
    }
}
