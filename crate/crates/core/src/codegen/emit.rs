//! C emission: one kernel function plus a timing and validation `main`.

use std::collections::HashSet;
use std::fmt::Write;

use super::ir::{IrNode, LoopIr, StorageClass};
use crate::frontend::{DataId, DataRole, DeclaredType, DimId, KernelGraph, OpKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedKernel {
    pub source: String,
    pub entry: String,
    /// C parameter declarations of the entry point, in order.
    pub parameters: Vec<String>,
    pub key: String,
    pub threads: Vec<u32>,
}

const C_WORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "main",
    "pt", "e", "s", "f", "in", "out", "reps", "best", "sum", "seed", "now", "chunk_lo", "lcg_next", "argc",
    "argv", "a", "t", "r", "o", "ts", "start", "size_t", "FILE", "NULL", "stderr", "fprintf", "free", "malloc", "printf", "fopen", "fread", "fwrite", "fclose", "atol", "strcmp",
];

fn mangle(name: &str, reserved: &HashSet<String>) -> String {
    if reserved.contains(name) || C_WORDS.contains(&name) {
        format!("{name}_")
    } else {
        name.to_string()
    }
}

struct Emitter<'a> {
    graph: &'a KernelGraph,
    ir: &'a LoopIr,
    names: Vec<String>,
    labels: Vec<String>,
    extents: Vec<String>,
    out: String,
    depth: usize,
    bound: Vec<DimId>,
    /// Dimension cut by the enclosing parallel region, and its partials.
    region: Option<(DimId, Vec<DataId>)>,
}

impl Emitter<'_> {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn size_expr(&self, data: DataId) -> String {
        let dims = self.graph.data_dims(data);
        if dims.is_empty() {
            "1".into()
        } else {
            dims.iter().map(|d| format!("(size_t){}", self.extents[d.0])).collect::<Vec<_>>().join(" * ")
        }
    }

    fn is_scalar_input(&self, data: DataId) -> bool {
        let d = self.graph.flow.data_node(data);
        d.role == DataRole::Input && d.declared == Some(DeclaredType::Scalar)
    }

    fn access(&self, data: DataId) -> String {
        let name = &self.names[data.0];
        if self.ir.classes[data.0] == StorageClass::Contracted || self.is_scalar_input(data) {
            return name.clone();
        }
        let partial = self.region.as_ref().is_some_and(|(_, p)| p.contains(&data));
        let base = if partial { format!("{name}_p") } else { name.clone() };
        let dims = self.graph.data_dims(data);
        let index = match dims.as_slice() {
            [] => "0".to_string(),
            [d] => self.labels[d.0].clone(),
            [o, i] => format!("{} * {} + {}", self.labels[o.0], self.extents[i.0], self.labels[i.0]),
            _ => unreachable!("at most two dimensions"),
        };
        format!("{base}[{index}]")
    }

    fn bounds(&self, dim: DimId) -> (String, String) {
        match &self.region {
            Some((d, _)) if *d == dim => {
                let l = &self.labels[dim.0];
                (format!("{l}_lo"), format!("{l}_hi"))
            }
            _ => ("0".into(), self.extents[dim.0].clone()),
        }
    }

    fn open_loop(&mut self, dim: DimId) {
        let (lo, hi) = self.bounds(dim);
        let l = self.labels[dim.0].clone();
        self.line(&format!("for (long {l} = {lo}; {l} < {hi}; ++{l}) {{"));
        self.depth += 1;
    }

    fn close(&mut self) {
        self.depth -= 1;
        self.line("}");
    }

    fn nodes(&mut self, nodes: &[IrNode], path: &mut Vec<usize>) {
        for (n, node) in nodes.iter().enumerate() {
            path.push(n);
            self.node(node, path);
            path.pop();
        }
    }

    fn node(&mut self, node: &IrNode, path: &mut Vec<usize>) {
        match node {
            IrNode::Compute { op } => {
                let o = self.graph.flow.op(*op);
                let r = self.access(o.result);
                let a = self.access(o.operands[0].data);
                let b = o.operands.get(1).map(|x| self.access(x.data)).unwrap_or_default();
                let text = match o.kind {
                    OpKind::Copy => format!("{r} = {a};"),
                    OpKind::Add => format!("{r} = {a} + {b};"),
                    OpKind::Subtract => format!("{r} = {a} - {b};"),
                    OpKind::Scale => format!("{r} = {a} * {b};"),
                    OpKind::Multiply if self.graph.nest(*op).reduction().is_some() => format!("{r} += {a} * {b};"),
                    OpKind::Multiply => format!("{r} = {a} * {b};"),
                };
                self.line(&text);
            }
            IrNode::Fill { data } => {
                let free: Vec<DimId> =
                    self.graph.data_dims(*data).into_iter().filter(|d| !self.bound.contains(d)).collect();
                for &d in &free {
                    self.open_loop(d);
                }
                let target = self.access(*data);
                self.line(&format!("{target} = 0.0;"));
                for _ in &free {
                    self.close();
                }
            }
            IrNode::Loop { dim, body } => {
                self.open_loop(*dim);
                let homed: Vec<DataId> =
                    self.ir.homes.iter().filter(|(_, h)| h == path).map(|(d, _)| *d).collect();
                for d in homed {
                    let name = self.names[d.0].clone();
                    self.line(&format!("double {name};"));
                }
                self.bound.push(*dim);
                self.nodes(body, path);
                self.bound.pop();
                self.close();
            }
            IrNode::Parallel { dim, threads, partials, body } => {
                let t = *threads;
                self.line("{");
                self.depth += 1;
                for &d in partials {
                    let (name, size) = (self.names[d.0].clone(), self.size_expr(d));
                    self.line(&format!("double *{name}_part = malloc(sizeof(double) * {size} * {t});"));
                }
                self.line(&format!("#pragma omp parallel for num_threads({t}) schedule(static,1)"));
                self.line(&format!("for (long pt = 0; pt < {t}; ++pt) {{"));
                self.depth += 1;
                let l = self.labels[dim.0].clone();
                let n = self.extents[dim.0].clone();
                self.line(&format!("long {l}_lo = chunk_lo({n}, pt, {t}), {l}_hi = chunk_lo({n}, pt + 1, {t});"));
                for &d in partials {
                    let (name, size) = (self.names[d.0].clone(), self.size_expr(d));
                    self.line(&format!("double *restrict {name}_p = {name}_part + (size_t)pt * {size};"));
                }
                self.region = Some((*dim, partials.clone()));
                self.nodes(body, path);
                self.region = None;
                self.close();
                for &d in partials {
                    let (name, size) = (self.names[d.0].clone(), self.size_expr(d));
                    self.line(&format!("for (size_t e = 0; e < {size}; ++e) {{"));
                    self.depth += 1;
                    self.line("double s = 0.0;");
                    self.line(&format!("for (long pt = 0; pt < {t}; ++pt) s += {name}_part[(size_t)pt * {size} + e];"));
                    self.line(&format!("{name}[e] = s;"));
                    self.close();
                    self.line(&format!("free({name}_part);"));
                }
                self.close();
            }
            IrNode::Join { .. } => {}
        }
    }
}

fn c_identifier(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if C_WORDS.contains(&s.as_str()) || s.starts_with(|c: char| c.is_ascii_digit()) {
        format!("k_{s}")
    } else {
        s
    }
}

/// Renders contracted IR as a self-contained C99 program with OpenMP
/// pragmas. Output is a pure function of the IR.
pub fn emit_c(ir: &LoopIr, graph: &KernelGraph) -> GeneratedKernel {
    let labels: Vec<String> = graph.dims.iter().map(|d| d.label.clone()).collect();
    let extents: Vec<String> = graph.dims.iter().map(|d| d.extent.clone()).collect();
    let mut reserved: HashSet<String> = labels.iter().chain(&extents).cloned().collect();
    for l in &labels {
        reserved.insert(format!("{l}_lo"));
        reserved.insert(format!("{l}_hi"));
    }
    let entry = c_identifier(graph.name());
    reserved.insert(entry.clone());
    let names: Vec<String> = graph.flow.data.iter().map(|d| mangle(&d.name, &reserved)).collect();

    let params: Vec<DataId> = graph.flow.data.iter().filter(|d| d.role != DataRole::Temporary).map(|d| d.id).collect();
    let mut parameters: Vec<String> = extents.iter().map(|e| format!("long {e}")).collect();
    for &d in &params {
        let node = graph.flow.data_node(d);
        let n = &names[d.0];
        parameters.push(match (node.role, node.declared) {
            (DataRole::Input, Some(DeclaredType::Scalar)) => format!("double {n}"),
            (DataRole::Input, _) => format!("const double *restrict {n}"),
            _ => format!("double *restrict {n}"),
        });
    }

    let mut e = Emitter {
        graph,
        ir,
        names: names.clone(),
        labels,
        extents: extents.clone(),
        out: String::new(),
        depth: 0,
        bound: Vec::new(),
        region: None,
    };
    e.out.push_str("#define _POSIX_C_SOURCE 199309L\n");
    e.out.push_str("#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n#include <time.h>\n\n");
    let _ = writeln!(e.out, "/* {} */", ir.key.replace("*/", "* /"));
    e.out.push_str("static inline long chunk_lo(long n, long p, long np) { return n * p / np; }\n\n");
    let _ = writeln!(e.out, "void {entry}({})", parameters.join(", "));
    e.out.push_str("{\n");
    e.depth = 1;
    let arrays: Vec<DataId> = graph
        .flow
        .data
        .iter()
        .filter(|d| d.role == DataRole::Temporary && ir.classes[d.id.0] == StorageClass::Array)
        .map(|d| d.id)
        .collect();
    for &d in &arrays {
        let line = format!("double *{} = malloc(sizeof(double) * {});", names[d.0], e.size_expr(d));
        e.line(&line);
    }
    e.nodes(&ir.body, &mut Vec::new());
    for &d in &arrays {
        let line = format!("free({});", names[d.0]);
        e.line(&line);
    }
    e.out.push_str("}\n\n");
    let main = emit_main(graph, &entry, &names, &extents, &params, &e);
    e.out.push_str(&main);

    let threads = {
        let mut t = Vec::new();
        ir.walk(&mut |n, _| {
            if let IrNode::Parallel { threads, .. } = n {
                t.push(*threads);
            }
        });
        t
    };
    GeneratedKernel { source: e.out, entry, parameters, key: ir.key.clone(), threads }
}

fn emit_main(
    graph: &KernelGraph,
    entry: &str,
    names: &[String],
    extents: &[String],
    params: &[DataId],
    e: &Emitter<'_>,
) -> String {
    let mut m = String::new();
    m.push_str(
        "static double lcg_next(unsigned long long *seed)\n{\n    \
         *seed = *seed * 6364136223846793005ULL + 1442695040888963407ULL;\n    \
         return (double)(*seed >> 11) / 9007199254740992.0 * 2.0 - 1.0;\n}\n\n",
    );
    m.push_str(
        "static double now(void)\n{\n    struct timespec ts;\n    clock_gettime(CLOCK_MONOTONIC, &ts);\n    \
         return (double)ts.tv_sec + 1e-9 * (double)ts.tv_nsec;\n}\n\n",
    );
    m.push_str("int main(int argc, char **argv)\n{\n");
    let nd = extents.len();
    let usage: String = extents.iter().map(|x| format!(" {x}")).collect();
    let _ = writeln!(m, "    if (argc < {}) {{", nd + 1);
    let _ = writeln!(m, "        fprintf(stderr, \"usage: %s{usage} [-i in.bin] [-o out.bin] [-r reps]\\n\", argv[0]);");
    m.push_str("        return 2;\n    }\n");
    for (n, x) in extents.iter().enumerate() {
        let _ = writeln!(m, "    long {x} = atol(argv[{}]);", n + 1);
    }
    m.push_str("    const char *in = NULL, *out = NULL;\n    long reps = 5;\n");
    let _ = writeln!(m, "    for (int a = {}; a + 1 < argc; a += 2) {{", nd + 1);
    m.push_str(
        "        if (strcmp(argv[a], \"-i\") == 0) in = argv[a + 1];\n        \
         else if (strcmp(argv[a], \"-o\") == 0) out = argv[a + 1];\n        \
         else if (strcmp(argv[a], \"-r\") == 0) reps = atol(argv[a + 1]);\n    }\n",
    );
    for &d in params {
        let _ = writeln!(m, "    double *{} = malloc(sizeof(double) * ({}));", names[d.0], e.size_expr(d));
    }
    m.push_str("    FILE *f = in ? fopen(in, \"rb\") : NULL;\n");
    m.push_str("    if (in && !f) {\n        fprintf(stderr, \"cannot open %s\\n\", in);\n        return 1;\n    }\n");
    m.push_str("    unsigned long long seed = 12345;\n");
    for &d in params.iter().filter(|d| graph.flow.data_node(**d).role == DataRole::Input) {
        let (n, size) = (&names[d.0], e.size_expr(d));
        let _ = writeln!(m, "    if (f) {{");
        let _ = writeln!(m, "        if (fread({n}, sizeof(double), {size}, f) != {size}) {{");
        m.push_str("            fprintf(stderr, \"short input\\n\");\n            return 1;\n        }\n");
        let _ = writeln!(m, "    }} else {{\n        for (size_t e = 0; e < {size}; ++e) {n}[e] = lcg_next(&seed);\n    }}");
    }
    m.push_str("    if (f) fclose(f);\n");
    let args: Vec<String> = extents
        .iter()
        .cloned()
        .chain(params.iter().map(|&d| {
            let node = graph.flow.data_node(d);
            if node.role == DataRole::Input && node.declared == Some(DeclaredType::Scalar) {
                format!("{}[0]", names[d.0])
            } else {
                names[d.0].clone()
            }
        }))
        .collect();
    let call = format!("{entry}({});", args.join(", "));
    let _ = writeln!(m, "    {call}");
    let outputs: Vec<DataId> =
        params.iter().copied().filter(|d| graph.flow.data_node(*d).role == DataRole::Output).collect();
    m.push_str("    if (out) {\n        FILE *o = fopen(out, \"wb\");\n        if (!o) {\n            \
                fprintf(stderr, \"cannot open %s\\n\", out);\n            return 1;\n        }\n");
    for &d in &outputs {
        let _ = writeln!(m, "        fwrite({}, sizeof(double), {}, o);", names[d.0], e.size_expr(d));
    }
    m.push_str("        fclose(o);\n    }\n");
    m.push_str("    double best = 0.0;\n    for (long r = 0; r < reps; ++r) {\n        double start = now();\n");
    let _ = writeln!(m, "        {call}");
    m.push_str("        double t = now() - start;\n        if (r == 0 || t < best) best = t;\n    }\n");
    m.push_str("    double sum = 0.0;\n");
    for &d in &outputs {
        let _ = writeln!(m, "    for (size_t e = 0; e < {}; ++e) sum += {}[e];", e.size_expr(d), names[d.0]);
    }
    m.push_str("    printf(\"seconds %.9e\\n\", best);\n    printf(\"checksum %.17g\\n\", sum);\n");
    for &d in params {
        let _ = writeln!(m, "    free({});", names[d.0]);
    }
    m.push_str("    return 0;\n}\n");
    m
}
