use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fusetune::fitness::{AnalyticFitness, Cached, EmpiricalFitness, Fitness, MachineModel, Toolchain};
use fusetune::frontend::{compile_kernel, Expr, KernelGraph};
use fusetune::fuseset::{
    digit_space_size, enumerate_space, format_notation, organism_key, parse_notation, Limits, Organism, ThreadSpace,
};
use fusetune::search::{max_fuse, run_strategy_with, LogEntry, SearchConfig, SearchLog};
use serde_json::{json, Value};

use crate::input::{check_legal, load_kernel, parse_extents, validate, write_c};
use crate::{CompileArgs, CorpusArgs, EnumerateArgs, Failure, FitnessSource, ReplayArgs, SearchArgs, ThreadChoice};

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn parse_organism(text: &str, graph: &KernelGraph, threads: u32) -> Result<Organism, Failure> {
    let org = parse_notation(text, graph, threads).map_err(|e| Failure::Invalid(format!("notation `{text}`: {e}")))?;
    check_legal(&org, graph)?;
    Ok(org)
}

pub fn compile(args: CompileArgs) -> Result<(), Failure> {
    let (_, graph) = load_kernel(&args.kernel)?;
    let cfg = SearchConfig { cores: args.cores, ..SearchConfig::default() };
    let org = match &args.organism {
        Some(text) => parse_organism(text, &graph, args.cores)?,
        None => max_fuse(&graph, &cfg),
    };
    write_c(&args.output, &org, &graph, !args.no_validate)?;
    println!("{}", organism_key(&org, &graph));
    Ok(())
}

fn search_with<F: Fitness>(
    args: &SearchArgs,
    graph: &KernelGraph,
    cfg: &SearchConfig,
    fitness: Cached<F>,
) -> Result<(), Failure> {
    std::fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let log_path = args.out.join("log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_failure(&log_path, e))?);
    let mut write_error = None;
    let mut sink = |e: &LogEntry| {
        let line = serde_json::to_string(e).expect("log entries serialise");
        if let Err(err) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_error.get_or_insert(err);
        }
    };
    let result = run_strategy_with(args.strategy, graph, cfg, &fitness, Some(&mut sink))
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(e) = write_error {
        return Err(io_failure(&log_path, e));
    }
    let best_c = args.out.join("best.c");
    write_c(&best_c, &result.best, graph, !args.no_validate)?;
    let summary = json!({
        "kernel": graph.name(),
        "strategy": result.strategy.name(),
        "fitness": fitness.inner().name(),
        "best": result.best_key,
        "best_notation": format_notation(&result.best, graph),
        "best_fitness": result.best_fitness.is_finite().then_some(result.best_fitness),
        "evaluations": result.evaluations,
        "log_entries": result.log.entries.len(),
        "generations": result.generations,
        "cache_hits": result.cache.hits,
        "cache_misses": result.cache.misses,
        "extents": fitness_extents(args, graph)?,
        "config": serde_json::to_value(cfg).expect("config serialises"),
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    let summary_path = args.out.join("summary.json");
    std::fs::write(&summary_path, format!("{text}\n")).map_err(|e| io_failure(&summary_path, e))?;
    println!("{text}");
    Ok(())
}

fn fitness_extents(args: &SearchArgs, graph: &KernelGraph) -> Result<Value, Failure> {
    let ext = parse_extents(&args.extents, graph)?;
    Ok(graph.dims.iter().zip(ext).map(|(d, n)| (d.extent.clone(), json!(n))).collect::<serde_json::Map<_, _>>().into())
}

pub fn search(args: SearchArgs) -> Result<(), Failure> {
    let (_, graph) = load_kernel(&args.kernel)?;
    let extents = parse_extents(&args.extents, &graph)?;
    let defaults = SearchConfig::default();
    let cfg = SearchConfig {
        strategy: args.strategy,
        seed: args.seed,
        budget: args.budget,
        thread_mode: args.threads_mode,
        cores: args.cores,
        population: args.population.unwrap_or(defaults.population),
        max_generations: args.max_generations.unwrap_or(defaults.max_generations),
        mutation_rate: args.mutation_rate.unwrap_or(defaults.mutation_rate),
        exhaustive_ops: args.exhaustive_ops.unwrap_or(defaults.exhaustive_ops),
        prune: !args.no_prune,
        ..defaults
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    match args.fitness {
        FitnessSource::Analytic => {
            let fitness = Cached::new(AnalyticFitness::new(MachineModel::new(extents, args.cores)));
            search_with(&args, &graph, &cfg, fitness)
        }
        FitnessSource::Empirical => {
            let mut toolchain = Toolchain::from_env();
            if let Some(t) = &args.cc_template {
                toolchain.template = t.clone();
            }
            toolchain.probe().map_err(|e| Failure::Toolchain(format!("toolchain unusable: {e}")))?;
            let fitness = Cached::new(EmpiricalFitness::new(toolchain, extents, args.reps));
            search_with(&args, &graph, &cfg, fitness)
        }
    }
}

pub fn enumerate(args: EnumerateArgs) -> Result<(), Failure> {
    let (_, graph) = load_kernel(&args.kernel)?;
    let counts: Vec<u32> = (1..=args.max_threads).collect();
    let threads = match args.thread_space {
        ThreadChoice::Const => ThreadSpace::Const(1),
        ThreadChoice::Global => ThreadSpace::Global(counts),
        ThreadChoice::PerPartition => ThreadSpace::PerPartition(counts),
    };
    let limits = Limits { max_ops: args.max_ops, partitions: !args.no_partitions, prune: !args.no_prune, threads };
    let space = enumerate_space(&graph, &limits).map_err(|e| Failure::Invalid(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    if !args.count_only {
        for org in &space {
            writeln!(out, "{}", organism_key(org, &graph)).map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    let mut footer = format!("total {}\n", space.len());
    if args.digit_space {
        let digits = digit_space_size(graph.op_count() as u32, args.depth, args.max_threads);
        let ratio = space.len() as f64 / digits.to_string().parse::<f64>().unwrap_or(f64::INFINITY);
        footer.push_str(&format!("digit space {digits}\nratio {:.6}%\n", 100.0 * ratio));
    }
    write!(out, "{footer}").map_err(|e| Failure::Usage(e.to_string()))
}

pub fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.log).map_err(|e| io_failure(&args.log, e))?;
    let log = SearchLog::from_jsonl(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", args.log.display())))?;
    let failures = log.entries.iter().filter(|e| e.fitness.is_none()).count();
    let incumbents = log.incumbents();
    let improvements = incumbents.windows(2).filter(|w| w[1] < w[0]).count() + usize::from(incumbents.first().is_some_and(|v| v.is_finite()));
    let best = log.best();
    let report = json!({
        "entries": log.entries.len(),
        "failures": failures,
        "improvements": improvements,
        "best": best.map(|b| b.key.clone()),
        "best_fitness": best.and_then(|b| b.fitness),
        "best_generation": best.map(|b| b.generation),
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    if let Some(path) = &args.emit {
        let kernel = args.kernel.as_deref().ok_or_else(|| Failure::Usage("--emit needs --kernel".into()))?;
        let best = best.ok_or_else(|| Failure::Invalid("log holds no successful evaluation".into()))?;
        let (_, graph) = load_kernel(kernel)?;
        let org = parse_organism(&best.key, &graph, 1)?;
        write_c(path, &org, &graph, !args.no_validate)?;
    }
    Ok(())
}

fn names(expr: &Expr, out: &mut Vec<String>) {
    match expr {
        Expr::Var(n) => {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        Expr::Transpose(e) => names(e, out),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            names(a, out);
            names(b, out);
        }
    }
}

/// Values read by two or more statements, with the 1-based statements that
/// read them.
fn reuse(graph: &KernelGraph) -> BTreeMap<String, Vec<usize>> {
    let mut readers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (n, s) in graph.flow.spec.statements.iter().enumerate() {
        let mut read = Vec::new();
        names(&s.expr, &mut read);
        for name in read {
            readers.entry(name).or_default().push(n + 1);
        }
    }
    readers.retain(|_, v| v.len() >= 2);
    readers
}

fn corpus_entry(path: &Path, cfg: &SearchConfig) -> Value {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let graph = match std::fs::read_to_string(path) {
        Err(e) => return json!({ "kernel": stem, "passed": false, "error": e.to_string() }),
        Ok(text) => match compile_kernel(&text) {
            Err(e) => return json!({ "kernel": stem, "passed": false, "error": e.to_string() }),
            Ok(g) => g,
        },
    };
    let org = max_fuse(&graph, cfg);
    let mut entry = json!({
        "kernel": stem,
        "name": graph.name(),
        "ops": graph.op_count(),
        "statements": graph.flow.spec.statements.len(),
        "reuse": reuse(&graph),
        "max_fuse": organism_key(&org, &graph),
        "parallel_regions": org.partition_count(),
    });
    let fields = entry.as_object_mut().unwrap();
    match validate(&org, &graph) {
        Ok(err) => {
            fields.insert("max_error".into(), json!(err));
            fields.insert("passed".into(), json!(true));
        }
        Err(f) => {
            fields.insert("passed".into(), json!(false));
            fields.insert("error".into(), json!(f.message()));
        }
    }
    entry
}

pub fn corpus(args: CorpusArgs) -> Result<(), Failure> {
    let listing = std::fs::read_dir(&args.dir).map_err(|e| io_failure(&args.dir, e))?;
    let mut files: Vec<_> = listing
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "bto"))
        .filter(|p| args.kernel.as_deref().map_or(true, |k| p.file_stem().is_some_and(|s| s == k)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(match &args.kernel {
            Some(k) => format!("no kernels found: `{k}` is not in {}", args.dir.display()),
            None => format!("no kernels found in {}", args.dir.display()),
        }));
    }
    let cfg = SearchConfig { cores: args.cores, ..SearchConfig::default() };
    let kernels: Vec<Value> = files.iter().map(|p| corpus_entry(p, &cfg)).collect();
    let passed = kernels.iter().filter(|k| k["passed"] == json!(true)).count();
    let report = json!({ "kernels": kernels, "passed": passed, "total": files.len() });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    if passed == files.len() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{} of {} kernels failed", files.len() - passed, files.len())))
    }
}
